//! Small 1-D convolutional network engine: forward, exact reverse-mode gradients, Adam
//! and binary checkpoints.

mod adam;
mod checkpoint;
mod conv;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{checkpoint_load, checkpoint_save, decode_checkpoint, encode_checkpoint, Checkpoint};
pub use conv::{conv_forward, Activation, ConvLayer, LayerGrad, Padding, Tensor};

use crate::error::{ensure, Error, Result};
use crate::matrix::Matrix;
use crate::rng;
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct Network<T> {
    layers: Vec<ConvLayer<T>>,
    pub rng_seed: u64,
}

/// Shape of one layer, used to build and to check checkpoints.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub padding: Padding,
    pub activation: Activation,
}

impl<T: Real> Network<T> {
    pub fn new(layers: Vec<ConvLayer<T>>, rng_seed: u64) -> Result<Self> {
        for (i, pair) in layers.windows(2).enumerate() {
            ensure!(
                pair[0].out_channels == pair[1].in_channels,
                Error::Shape(format!(
                    "layer {i} emits {} channels but layer {} expects {}",
                    pair[0].out_channels,
                    i + 1,
                    pair[1].in_channels
                ))
            );
        }
        if let Some(last) = layers.last() {
            ensure!(
                last.activation == Activation::Linear,
                Error::InvalidArgument("output layer must be linear".into())
            );
        }
        Ok(Self { layers, rng_seed })
    }

    /// Glorot-initialised network from layer shapes; layer `l` draws from its own seeded stream.
    pub fn from_specs(specs: &[LayerSpec], rng_seed: u64) -> Result<Self> {
        let layers = specs
            .iter()
            .enumerate()
            .map(|(l, s)| {
                let mut r = rng::stream(rng_seed, "conv-init", l as u64);
                ConvLayer::glorot(s.in_channels, s.out_channels, s.kernel, s.padding, s.activation, &mut r)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(layers, rng_seed)
    }

    pub fn layers(&self) -> &[ConvLayer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [ConvLayer<T>] {
        &mut self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers
            .iter()
            .map(|l| LayerSpec {
                in_channels: l.in_channels,
                out_channels: l.out_channels,
                kernel: l.kernel,
                padding: l.padding,
                activation: l.activation,
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(ConvLayer::param_count).sum()
    }

    /// Frames of context seen by one output frame.
    pub fn receptive_field(&self) -> usize {
        1 + self.layers.iter().map(|l| l.kernel - 1).sum::<usize>()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(ConvLayer::is_finite)
    }

    /// Parameter slices in a fixed order: weights then bias, layer by layer.
    pub fn params(&self) -> Vec<&[T]> {
        self.layers.iter().flat_map(|l| [&l.weights[..], &l.bias[..]]).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut [T]> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weights[..], &mut l.bias[..]]).collect()
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        network_forward(x, self)
    }

    /// Forward pass that keeps what [`backward`] needs.
    pub fn forward_cached(&self, x: &Tensor<T>) -> Result<ForwardCache<T>> {
        let mut padded = Vec::with_capacity(self.layers.len());
        let mut outputs = Vec::with_capacity(self.layers.len());
        let mut current = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let p = layer.pad(&current).map_err(|e| e.context(format!("layer {i}")))?;
            let y = layer.forward_padded(&p, current.rows());
            padded.push(p);
            outputs.push(y.clone());
            current = y;
        }
        Ok(ForwardCache { padded, outputs, output: current })
    }
}

/// Activations recorded by [`Network::forward_cached`].
#[derive(Clone, Debug)]
pub struct ForwardCache<T> {
    padded: Vec<Vec<T>>,
    outputs: Vec<Tensor<T>>,
    output: Tensor<T>,
}

impl<T: Real> ForwardCache<T> {
    pub fn output(&self) -> &Tensor<T> {
        &self.output
    }
}

/// Gradients for every layer of a network, same order as [`Network::params`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<LayerGrad<T>>,
}

impl<T: Real> Gradients<T> {
    pub fn zeros_like(net: &Network<T>) -> Self {
        Self { layers: net.layers.iter().map(LayerGrad::zeros_like).collect() }
    }

    pub fn slices(&self) -> Vec<&[T]> {
        self.layers.iter().flat_map(|g| [&g.weights[..], &g.bias[..]]).collect()
    }

    /// `self += other`, elementwise in a fixed order.
    pub fn accumulate(&mut self, other: &Self) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, &y) in a.weights.iter_mut().zip(&b.weights).chain(a.bias.iter_mut().zip(&b.bias)) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: T) {
        for g in &mut self.layers {
            for x in g.weights.iter_mut().chain(g.bias.iter_mut()) {
                *x *= s;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|g| g.weights.iter().chain(&g.bias).all(|v| v.is_finite()))
    }
}

/// Apply the layers in order. An empty network is the identity.
pub fn network_forward<T: Real>(x: &Tensor<T>, net: &Network<T>) -> Result<Tensor<T>> {
    let mut current = x.clone();
    for (i, layer) in net.layers.iter().enumerate() {
        current = conv_forward(&current, layer).map_err(|e| e.context(format!("layer {i}")))?;
    }
    Ok(current)
}

/// Exact parameter gradients given the loss gradient w.r.t. the network output.
pub fn backward<T: Real>(net: &Network<T>, cache: &ForwardCache<T>, grad_output: &Tensor<T>) -> Result<Gradients<T>> {
    ensure!(
        cache.padded.len() == net.layers.len(),
        Error::InvalidArgument("forward cache was recorded for a different network".into())
    );
    grad_output.ensure_same_shape(&cache.output, "output gradient")?;
    let mut grads = Gradients::zeros_like(net);
    let mut upstream = grad_output.clone();
    for l in (0..net.layers.len()).rev() {
        let layer = &net.layers[l];
        ensure!(
            cache.outputs[l].cols() == layer.out_channels,
            Error::InvalidArgument(format!("forward cache does not match layer {l}"))
        );
        match layer.backward(&cache.padded[l], &cache.outputs[l], &upstream, &mut grads.layers[l], l > 0) {
            Some(g) => upstream = g,
            None => break,
        }
    }
    Ok(grads)
}

/// Mean squared error over all elements and its gradient w.r.t. `pred`.
pub fn mse_loss<T: Real>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(T, Tensor<T>)> {
    pred.ensure_same_shape(target, "mse_loss")?;
    let n = T::from_usize_lossy(pred.as_slice().len().max(1));
    let two = T::lit(2.0);
    let mut loss = T::zero();
    let mut grad = Vec::with_capacity(pred.as_slice().len());
    for (&p, &t) in pred.as_slice().iter().zip(target.as_slice()) {
        let d = p - t;
        loss += d * d;
        grad.push(two * d / n);
    }
    Ok((loss / n, Matrix::from_vec(pred.rows(), pred.cols(), grad)?))
}

#[cfg(test)]
mod tests;
