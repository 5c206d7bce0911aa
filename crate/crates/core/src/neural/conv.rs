//! 1-D convolution layer over `(time, channel)` tensors.
//!
//! Weights are stored `[out][tap][in]` so that the receptive window of output frame `t`
//! is the contiguous slice `padded[t*C .. (t+k)*C]` of the row-major padded input.

use rand::Rng as _;

use crate::error::{ensure, Error, Result};
use crate::matrix::Matrix;
use crate::rng::Rng;
use crate::scalar::Real;

pub type Tensor<T> = Matrix<T>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Padding {
    /// `k-1` zeros on the left: output `t` sees inputs `t-k+1 ..= t`.
    Causal,
    /// `(k-1)/2` zeros on each side.
    Centered,
}

impl Padding {
    pub fn left(self, kernel: usize) -> usize {
        match self {
            Padding::Causal => kernel - 1,
            Padding::Centered => (kernel - 1) / 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Activation {
    Tanh,
    Linear,
}

impl Activation {
    #[inline]
    fn apply<T: Real>(self, z: T) -> T {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Linear => z,
        }
    }

    /// Derivative expressed through the activation output `y`.
    #[inline]
    fn derivative_from_output<T: Real>(self, y: T) -> T {
        match self {
            Activation::Tanh => T::one() - y * y,
            Activation::Linear => T::one(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub padding: Padding,
    pub activation: Activation,
    /// `out x kernel x in`, see [`ConvLayer::weight`].
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> ConvLayer<T> {
    /// Zero-initialised layer.
    pub fn zeros(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        padding: Padding,
        activation: Activation,
    ) -> Result<Self> {
        ensure!(kernel % 2 == 1, Error::InvalidArgument(format!("kernel width {kernel} must be odd")));
        ensure!(
            in_channels > 0 && out_channels > 0,
            Error::InvalidArgument("channel counts must be positive".into())
        );
        Ok(Self {
            in_channels,
            out_channels,
            kernel,
            padding,
            activation,
            weights: vec![T::zero(); out_channels * kernel * in_channels],
            bias: vec![T::zero(); out_channels],
        })
    }

    /// Glorot-uniform weights in `+-sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn glorot(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        padding: Padding,
        activation: Activation,
        rng: &mut Rng,
    ) -> Result<Self> {
        let mut layer = Self::zeros(in_channels, out_channels, kernel, padding, activation)?;
        let limit = (6.0 / ((in_channels + out_channels) * kernel) as f64).sqrt();
        for w in &mut layer.weights {
            *w = T::lit(rng.random_range(-limit..limit));
        }
        Ok(layer)
    }

    #[inline]
    pub fn weight_index(&self, out: usize, input: usize, tap: usize) -> usize {
        (out * self.kernel + tap) * self.in_channels + input
    }

    /// `w[out, input, tap]`.
    #[inline]
    pub fn weight(&self, out: usize, input: usize, tap: usize) -> T {
        self.weights[self.weight_index(out, input, tap)]
    }

    #[inline]
    pub fn set_weight(&mut self, out: usize, input: usize, tap: usize, v: T) {
        let i = self.weight_index(out, input, tap);
        self.weights[i] = v;
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|v| v.is_finite())
    }

    fn row_len(&self) -> usize {
        self.kernel * self.in_channels
    }

    /// Zero-padded copy of `x`, `(T + k - 1) x C`.
    pub(crate) fn pad(&self, x: &Tensor<T>) -> Result<Vec<T>> {
        ensure!(
            x.cols() == self.in_channels,
            Error::Shape(format!("layer expects {} input channels, got {}", self.in_channels, x.cols()))
        );
        let c = self.in_channels;
        let left = self.padding.left(self.kernel);
        let mut padded = vec![T::zero(); (x.rows() + self.kernel - 1) * c];
        padded[left * c..(left + x.rows()) * c].copy_from_slice(x.as_slice());
        Ok(padded)
    }

    /// Forward pass over an already padded input.
    pub(crate) fn forward_padded(&self, padded: &[T], frames: usize) -> Tensor<T> {
        let (c, o_n, row) = (self.in_channels, self.out_channels, self.row_len());
        let mut out = vec![T::zero(); frames * o_n];
        let mut t = 0;
        while t + 4 <= frames {
            let x0 = &padded[t * c..t * c + row];
            let x1 = &padded[(t + 1) * c..(t + 1) * c + row];
            let x2 = &padded[(t + 2) * c..(t + 2) * c + row];
            let x3 = &padded[(t + 3) * c..(t + 3) * c + row];
            for o in 0..o_n {
                let w = &self.weights[o * row..(o + 1) * row];
                let [a0, a1, a2, a3] = dot4(w, x0, x1, x2, x3);
                let b = self.bias[o];
                out[t * o_n + o] = self.activation.apply(b + a0);
                out[(t + 1) * o_n + o] = self.activation.apply(b + a1);
                out[(t + 2) * o_n + o] = self.activation.apply(b + a2);
                out[(t + 3) * o_n + o] = self.activation.apply(b + a3);
            }
            t += 4;
        }
        for t in t..frames {
            let x = &padded[t * c..t * c + row];
            for o in 0..o_n {
                let w = &self.weights[o * row..(o + 1) * row];
                out[t * o_n + o] = self.activation.apply(self.bias[o] + dot(w, x));
            }
        }
        Matrix::from_vec(frames, o_n, out).expect("output buffer sized to frames x out")
    }

    /// Back-propagate through the layer.
    ///
    /// `output` is this layer's activation output and `grad_out` the loss gradient w.r.t. it.
    /// Parameter gradients are accumulated into `grad`. Returns the gradient w.r.t. the
    /// unpadded input when `want_input_grad` is set.
    pub(crate) fn backward(
        &self,
        padded: &[T],
        output: &Tensor<T>,
        grad_out: &Tensor<T>,
        grad: &mut LayerGrad<T>,
        want_input_grad: bool,
    ) -> Option<Tensor<T>> {
        let (c, o_n, row, frames) = (self.in_channels, self.out_channels, self.row_len(), output.rows());
        let mut gz = grad_out.clone();
        if self.activation != Activation::Linear {
            for (g, &y) in gz.as_mut_slice().iter_mut().zip(output.as_slice()) {
                *g *= self.activation.derivative_from_output(y);
            }
        }
        let gz = gz.as_slice();
        for t in 0..frames {
            for (o, &g) in gz[t * o_n..(t + 1) * o_n].iter().enumerate() {
                grad.bias[o] += g;
            }
        }
        for o in 0..o_n {
            let gw = &mut grad.weights[o * row..(o + 1) * row];
            let g = |t: usize| gz[t * o_n + o];
            let mut t = 0;
            while t + 4 <= frames {
                let x = |k: usize| &padded[(t + k) * c..(t + k) * c + row];
                axpy4(gw, [g(t), g(t + 1), g(t + 2), g(t + 3)], [x(0), x(1), x(2), x(3)]);
                t += 4;
            }
            for t in t..frames {
                axpy(gw, g(t), &padded[t * c..t * c + row]);
            }
        }
        if !want_input_grad {
            return None;
        }
        let mut gpad = vec![T::zero(); padded.len()];
        for t in 0..frames {
            let window = &mut gpad[t * c..t * c + row];
            let g = &gz[t * o_n..(t + 1) * o_n];
            let w = |o: usize| &self.weights[o * row..(o + 1) * row];
            let mut o = 0;
            while o + 4 <= o_n {
                axpy4(window, [g[o], g[o + 1], g[o + 2], g[o + 3]], [w(o), w(o + 1), w(o + 2), w(o + 3)]);
                o += 4;
            }
            for o in o..o_n {
                axpy(window, g[o], w(o));
            }
        }
        let left = self.padding.left(self.kernel);
        Some(Matrix::from_vec(frames, c, gpad[left * c..(left + frames) * c].to_vec()).expect("sized"))
    }
}

/// Parameter gradients of one layer, same layout as the layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrad<T> {
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> LayerGrad<T> {
    pub fn zeros_like(layer: &ConvLayer<T>) -> Self {
        Self { weights: vec![T::zero(); layer.weights.len()], bias: vec![T::zero(); layer.bias.len()] }
    }
}

/// Convolve `x` with `layer` and apply its activation. Output keeps the input length.
pub fn conv_forward<T: Real>(x: &Tensor<T>, layer: &ConvLayer<T>) -> Result<Tensor<T>> {
    let padded = layer.pad(x)?;
    Ok(layer.forward_padded(&padded, x.rows()))
}

const LANES: usize = 4;

#[inline]
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let n = a.len().min(b.len());
    let mut acc = [T::zero(); LANES];
    let chunks = n / LANES;
    for i in 0..chunks {
        for l in 0..LANES {
            acc[l] += a[i * LANES + l] * b[i * LANES + l];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in chunks * LANES..n {
        s += a[i] * b[i];
    }
    s
}

#[inline]
fn dot4<T: Real>(w: &[T], x0: &[T], x1: &[T], x2: &[T], x3: &[T]) -> [T; 4] {
    let n = w.len();
    let (x0, x1, x2, x3) = (&x0[..n], &x1[..n], &x2[..n], &x3[..n]);
    let mut a0 = [T::zero(); LANES];
    let mut a1 = [T::zero(); LANES];
    let mut a2 = [T::zero(); LANES];
    let mut a3 = [T::zero(); LANES];
    let chunks = n / LANES;
    for i in 0..chunks {
        let base = i * LANES;
        for l in 0..LANES {
            let wv = w[base + l];
            a0[l] += wv * x0[base + l];
            a1[l] += wv * x1[base + l];
            a2[l] += wv * x2[base + l];
            a3[l] += wv * x3[base + l];
        }
    }
    let fold = |a: [T; LANES]| (a[0] + a[1]) + (a[2] + a[3]);
    let mut out = [fold(a0), fold(a1), fold(a2), fold(a3)];
    for i in chunks * LANES..n {
        out[0] += w[i] * x0[i];
        out[1] += w[i] * x1[i];
        out[2] += w[i] * x2[i];
        out[3] += w[i] * x3[i];
    }
    out
}

#[inline]
fn axpy<T: Real>(y: &mut [T], a: T, x: &[T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// `y += a[0] x[0] + a[1] x[1] + a[2] x[2] + a[3] x[3]`.
#[inline]
fn axpy4<T: Real>(y: &mut [T], a: [T; 4], x: [&[T]; 4]) {
    let n = y.len();
    let (x0, x1, x2, x3) = (&x[0][..n], &x[1][..n], &x[2][..n], &x[3][..n]);
    for i in 0..n {
        y[i] += a[0] * x0[i] + a[1] * x1[i] + a[2] * x2[i] + a[3] * x3[i];
    }
}
