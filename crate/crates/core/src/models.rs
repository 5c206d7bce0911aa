//! The three feature-domain enhancement architectures and their training loop.
//!
//! Networks see per-channel z-normalised `ln(1 + energy)` features. Their linear output head is
//! read as clean log-energy (vanilla), noise log-energy (spectral subtraction) or a per-channel
//! gain (Wiener mask); subtraction and masking happen on linear energies.

use std::fmt;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::audio::write_text;
use crate::error::{ensure, Error, Result};
use crate::features::{CiFeatureSequence, N_CHANNELS};
use crate::matrix::Matrix;
use crate::neural::{
    adam_step, backward, decode_checkpoint, encode_checkpoint, mse_loss, network_forward, Activation, AdamConfig,
    AdamState, Gradients, LayerSpec, Network, Padding, Tensor,
};
use crate::rng;
use crate::scalar::Real;

pub const STD_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ArchKind {
    Vanilla,
    SpectralSub,
    WienerMask,
}

impl ArchKind {
    pub const ALL: [ArchKind; 3] = [ArchKind::Vanilla, ArchKind::SpectralSub, ArchKind::WienerMask];

    pub fn name(self) -> &'static str {
        match self {
            ArchKind::Vanilla => "vanilla",
            ArchKind::SpectralSub => "ss",
            ArchKind::WienerMask => "wiener",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SeArchitecture {
    pub kind: ArchKind,
    pub causal: bool,
}

impl SeArchitecture {
    pub fn new(kind: ArchKind, causal: bool) -> Self {
        Self { kind, causal }
    }

    /// All six (kind, causal) combinations, non-causal first.
    pub fn all() -> Vec<Self> {
        [false, true]
            .into_iter()
            .flat_map(|causal| ArchKind::ALL.into_iter().map(move |kind| Self { kind, causal }))
            .collect()
    }

    pub fn padding(self) -> Padding {
        if self.causal {
            Padding::Causal
        } else {
            Padding::Centered
        }
    }
}

/// `vanilla-cnn`, `ss-cnn-causal`, ...
impl fmt::Display for SeArchitecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-cnn{}", self.kind.name(), if self.causal { "-causal" } else { "" })
    }
}

impl FromStr for SeArchitecture {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let (base, causal) = match s.strip_suffix("-causal") {
            Some(b) => (b, true),
            None => (s, false),
        };
        let kind = match base.strip_suffix("-cnn").unwrap_or(base) {
            "vanilla" => ArchKind::Vanilla,
            "ss" | "spectral-sub" => ArchKind::SpectralSub,
            "wiener" | "wiener-mask" => ArchKind::WienerMask,
            other => return Err(Error::Parse(format!("unknown architecture '{other}'"))),
        };
        Ok(Self { kind, causal })
    }
}

/// Network shape: `hidden_layers` tanh layers of `hidden_channels`, then a linear 22-channel head.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelConfig {
    pub hidden_layers: usize,
    pub hidden_channels: usize,
    pub kernel: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { hidden_layers: 6, hidden_channels: 65, kernel: 5, seed: 0 }
    }
}

pub fn build_model<T: Real>(arch: SeArchitecture, cfg: &ModelConfig) -> Result<Network<T>> {
    let padding = arch.padding();
    let mut specs = Vec::with_capacity(cfg.hidden_layers + 1);
    let mut width = N_CHANNELS;
    for _ in 0..cfg.hidden_layers {
        specs.push(LayerSpec {
            in_channels: width,
            out_channels: cfg.hidden_channels,
            kernel: cfg.kernel,
            padding,
            activation: Activation::Tanh,
        });
        width = cfg.hidden_channels;
    }
    specs.push(LayerSpec {
        in_channels: width,
        out_channels: N_CHANNELS,
        kernel: cfg.kernel,
        padding,
        activation: Activation::Linear,
    });
    Network::from_specs(&specs, cfg.seed)
}

/// Per-channel mean and standard deviation of `ln(1 + energy)`.
#[derive(Clone, Debug, PartialEq)]
pub struct NormStats<T> {
    pub mean: Vec<T>,
    pub std: Vec<T>,
}

impl<T: Real> NormStats<T> {
    pub fn identity(channels: usize) -> Self {
        Self { mean: vec![T::zero(); channels], std: vec![T::one(); channels] }
    }

    pub fn fit<'a>(seqs: impl IntoIterator<Item = &'a CiFeatureSequence<T>>) -> Result<Self> {
        let mut sum = vec![0.0f64; N_CHANNELS];
        let mut sum_sq = vec![0.0f64; N_CHANNELS];
        let mut count = 0usize;
        for s in seqs {
            ensure!(
                s.n_channels() == N_CHANNELS,
                Error::Shape(format!("expected {N_CHANNELS} channels, got {}", s.n_channels()))
            );
            for t in 0..s.n_frames() {
                for (c, &v) in s.features.row(t).iter().enumerate() {
                    let l = v.as_f64().ln_1p();
                    sum[c] += l;
                    sum_sq[c] += l * l;
                }
            }
            count += s.n_frames();
        }
        ensure!(count > 0, Error::InvalidArgument("no frames to fit normalisation".into()));
        let n = count as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let std = sum_sq
            .iter()
            .zip(&mean)
            .map(|(sq, m)| T::lit((sq / n - m * m).max(0.0).sqrt().max(STD_FLOOR)))
            .collect();
        Ok(Self { mean: mean.into_iter().map(T::lit).collect(), std })
    }

    /// `(ln(1 + y) - mean) / std`.
    pub fn normalize(&self, features: &Matrix<T>) -> Tensor<T> {
        let mut z = features.clone();
        for t in 0..z.rows() {
            for (c, v) in z.row_mut(t).iter_mut().enumerate() {
                *v = (v.ln_1p() - self.mean[c]) / self.std[c];
            }
        }
        z
    }

    /// Inverse of [`NormStats::normalize`] back to linear energy, floored at zero.
    pub fn denormalize_energy(&self, f: &Tensor<T>) -> Tensor<T> {
        let cap = T::max_value().ln() - T::one();
        let mut out = f.clone();
        for t in 0..out.rows() {
            for (c, v) in out.row_mut(t).iter_mut().enumerate() {
                let log = (*v * self.std[c] + self.mean[c]).min(cap);
                *v = log.exp_m1().max(T::zero());
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EnhanceOptions {
    /// Clamp the Wiener mask to `[0, 2]` before applying it.
    pub clamp_mask: bool,
}

pub fn enhance<T: Real>(
    noisy: &CiFeatureSequence<T>,
    net: &Network<T>,
    arch: SeArchitecture,
    stats: &NormStats<T>,
) -> Result<CiFeatureSequence<T>> {
    enhance_with(noisy, net, arch, stats, EnhanceOptions::default())
}

pub fn enhance_with<T: Real>(
    noisy: &CiFeatureSequence<T>,
    net: &Network<T>,
    arch: SeArchitecture,
    stats: &NormStats<T>,
    opts: EnhanceOptions,
) -> Result<CiFeatureSequence<T>> {
    ensure!(
        noisy.n_channels() == stats.mean.len(),
        Error::Shape(format!("features have {} channels, model expects {}", noisy.n_channels(), stats.mean.len()))
    );
    let y = &noisy.features;
    let f = network_forward(&stats.normalize(y), net)?;
    ensure!(f.shape() == y.shape(), Error::Shape(format!("network output {:?} vs input {:?}", f.shape(), y.shape())));
    ensure!(f.is_finite(), Error::NonFinite("network output".into()));
    let out = match arch.kind {
        ArchKind::Vanilla => stats.denormalize_energy(&f),
        ArchKind::SpectralSub => {
            let noise = stats.denormalize_energy(&f);
            Matrix::from_fn(y.rows(), y.cols(), |t, c| (y.get(t, c) - noise.get(t, c)).max(T::zero()))
        }
        ArchKind::WienerMask => Matrix::from_fn(y.rows(), y.cols(), |t, c| {
            let mut m = f.get(t, c);
            if opts.clamp_mask {
                m = m.max(T::zero()).min(T::lit(2.0));
            }
            (y.get(t, c) * m).max(T::zero())
        }),
    };
    ensure!(out.is_finite(), Error::NonFinite("enhanced features".into()));
    Ok(CiFeatureSequence::new(out, noisy.frame_rate))
}

/// Frame-aligned features of one training mixture.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingPair<T> {
    pub noisy: CiFeatureSequence<T>,
    pub clean: CiFeatureSequence<T>,
    /// Features of the scaled noise alone; the spectral-subtraction target.
    pub noise: CiFeatureSequence<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    pub dev_selection: bool,
    /// Random crop length per utterance and epoch; `None` trains on whole utterances.
    pub segment_frames: Option<usize>,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 8,
            adam: AdamConfig::default(),
            seed: 0,
            dev_selection: true,
            segment_frames: Some(96),
            model: ModelConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_mse: f64,
    pub dev_mse: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    pub arch: SeArchitecture,
    pub network: Network<T>,
    pub stats: NormStats<T>,
    pub history: Vec<EpochRecord>,
    /// 1-based epoch whose snapshot was returned.
    pub best_epoch: usize,
    /// Losses of the untrained network.
    pub initial_train_mse: f64,
    pub initial_dev_mse: f64,
}

impl<T: Real> TrainOutcome<T> {
    pub fn history_csv(&self) -> String {
        history_csv(&self.history)
    }
}

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,train_mse,dev_mse\n");
    for r in history {
        let _ = writeln!(out, "{},{:?},{:?}", r.epoch, r.train_mse, r.dev_mse);
    }
    out
}

/// 1-based index of the smallest dev loss; ties keep the earliest epoch.
pub fn select_best_epoch(dev_mse: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in dev_mse.iter().enumerate() {
        if best.map_or(true, |(_, b)| v < b) {
            best = Some((i + 1, v));
        }
    }
    best.map(|(i, _)| i)
}

struct Example<T> {
    input: Tensor<T>,
    /// Normalised log target (vanilla / spectral subtraction) or clean linear energy (mask).
    target: Tensor<T>,
    noisy_linear: Tensor<T>,
}

impl<T: Real> Example<T> {
    fn new(pair: &TrainingPair<T>, arch: SeArchitecture, stats: &NormStats<T>) -> Result<Self> {
        pair.noisy.features.ensure_same_shape(&pair.clean.features, "noisy/clean features")?;
        pair.noisy.features.ensure_same_shape(&pair.noise.features, "noisy/noise features")?;
        let target = match arch.kind {
            ArchKind::Vanilla => stats.normalize(&pair.clean.features),
            ArchKind::SpectralSub => stats.normalize(&pair.noise.features),
            ArchKind::WienerMask => pair.clean.features.clone(),
        };
        Ok(Self { input: stats.normalize(&pair.noisy.features), target, noisy_linear: pair.noisy.features.clone() })
    }

    fn frames(&self) -> usize {
        self.input.rows()
    }

    fn crop(&self, start: usize, len: usize) -> Self {
        let end = (start + len).min(self.frames());
        Self {
            input: self.input.slice_rows(start, end),
            target: self.target.slice_rows(start, end),
            noisy_linear: self.noisy_linear.slice_rows(start, end),
        }
    }
}

/// Loss and gradient w.r.t. the network output for one example.
fn example_loss<T: Real>(kind: ArchKind, out: &Tensor<T>, ex: &Example<T>) -> Result<(T, Tensor<T>)> {
    match kind {
        ArchKind::Vanilla | ArchKind::SpectralSub => mse_loss(out, &ex.target),
        ArchKind::WienerMask => {
            // Trained on the unfloored product y * mask; the zero floor is an inference-time clamp.
            let mut pred = out.clone();
            for (p, &y) in pred.as_mut_slice().iter_mut().zip(ex.noisy_linear.as_slice()) {
                *p *= y;
            }
            let (loss, mut grad) = mse_loss(&pred, &ex.target)?;
            for (g, &y) in grad.as_mut_slice().iter_mut().zip(ex.noisy_linear.as_slice()) {
                *g *= y;
            }
            Ok((loss, grad))
        }
    }
}

fn eval_loss<T: Real>(net: &Network<T>, kind: ArchKind, examples: &[Example<T>]) -> Result<f64> {
    let mut total = 0.0;
    for (i, ex) in examples.iter().enumerate() {
        let out = network_forward(&ex.input, net)?;
        let (loss, _) = example_loss(kind, &out, ex)?;
        let loss = loss.as_f64();
        ensure!(loss.is_finite(), Error::NonFinite(format!("evaluation loss on example {i}")));
        total += loss;
    }
    Ok(total / examples.len() as f64)
}

fn centre_crops<T: Real>(examples: &[Example<T>], segment: Option<usize>) -> Vec<Example<T>> {
    examples
        .iter()
        .map(|ex| match segment {
            Some(len) if ex.frames() > len => ex.crop((ex.frames() - len) / 2, len),
            _ => ex.crop(0, ex.frames()),
        })
        .collect()
}

/// Minibatch Adam on the MSE objective, keeping the epoch with the lowest dev loss.
pub fn train<T: Real>(
    arch: SeArchitecture,
    train_set: &[TrainingPair<T>],
    dev_set: &[TrainingPair<T>],
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    train_with_progress(arch, train_set, dev_set, cfg, |_| {})
}

pub fn train_with_progress<T: Real>(
    arch: SeArchitecture,
    train_set: &[TrainingPair<T>],
    dev_set: &[TrainingPair<T>],
    cfg: &TrainConfig,
    mut progress: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome<T>> {
    ensure!(!train_set.is_empty(), Error::InvalidArgument("empty training set".into()));
    ensure!(!dev_set.is_empty(), Error::InvalidArgument("empty dev set".into()));
    ensure!(cfg.epochs >= 1, Error::InvalidArgument("epochs must be >= 1".into()));
    ensure!(cfg.batch_size >= 1, Error::InvalidArgument("batch size must be >= 1".into()));
    if let Some(seg) = cfg.segment_frames {
        ensure!(seg >= 1, Error::InvalidArgument("segment length must be >= 1".into()));
    }

    let stats = NormStats::fit(train_set.iter().map(|p| &p.noisy))?;
    let examples = train_set.iter().map(|p| Example::new(p, arch, &stats)).collect::<Result<Vec<_>>>()?;
    let dev = dev_set.iter().map(|p| Example::new(p, arch, &stats)).collect::<Result<Vec<_>>>()?;
    let dev = centre_crops(&dev, cfg.segment_frames);

    let model_cfg = ModelConfig { seed: rng::derive_seed(cfg.seed, &arch.to_string(), 0), ..cfg.model };
    let mut net = build_model::<T>(arch, &model_cfg)?;
    let mut adam = AdamState::new(&net.params(), cfg.adam);

    let initial_train_mse = eval_loss(&net, arch.kind, &centre_crops(&examples, cfg.segment_frames))?;
    let initial_dev_mse = eval_loss(&net, arch.kind, &dev)?;

    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, Network<T>)> = None;
    let mut order: Vec<usize> = (0..examples.len()).collect();
    for epoch in 1..=cfg.epochs {
        let mut rng = rng::stream(cfg.seed, "epoch", epoch as u64);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = Gradients::zeros_like(&net);
            for &i in batch {
                let ex = &examples[i];
                let cropped;
                let ex = match cfg.segment_frames {
                    Some(len) if ex.frames() > len => {
                        cropped = ex.crop(rng.random_range(0..=ex.frames() - len), len);
                        &cropped
                    }
                    _ => ex,
                };
                let cache = net.forward_cached(&ex.input)?;
                let (loss, grad_out) = example_loss(arch.kind, cache.output(), ex)?;
                let loss = loss.as_f64();
                ensure!(
                    loss.is_finite(),
                    Error::NonFinite(format!("{arch}: training loss on utterance {i} in epoch {epoch}"))
                );
                loss_sum += loss;
                grads.accumulate(&backward(&net, &cache, &grad_out)?);
            }
            grads.scale(T::one() / T::from_usize_lossy(batch.len()));
            let grad_slices = grads.slices();
            adam_step(&mut net.params_mut(), &grad_slices, &mut adam)
                .map_err(|e| e.context(format!("{arch}: epoch {epoch}")))?;
        }
        let train_mse = loss_sum / examples.len() as f64;
        let dev_mse = eval_loss(&net, arch.kind, &dev)?;
        let record = EpochRecord { epoch, train_mse, dev_mse };
        progress(&record);
        history.push(record);
        let better = best.as_ref().map_or(true, |(_, b, _)| dev_mse < *b);
        if !cfg.dev_selection || better {
            best = Some((epoch, dev_mse, net.clone()));
        }
    }
    let (best_epoch, _, network) = best.expect("at least one epoch ran");
    Ok(TrainOutcome { arch, network, stats, history, best_epoch, initial_train_mse, initial_dev_mse })
}

const MODEL_MAGIC: &[u8; 4] = b"CIAR";
const MODEL_VERSION: u32 = 1;

/// Model file: architecture descriptor and normalisation statistics, then a network checkpoint.
pub fn save_model<T: Real>(
    path: impl AsRef<Path>,
    arch: SeArchitecture,
    stats: &NormStats<T>,
    net: &Network<T>,
) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    bytes.extend_from_slice(MODEL_MAGIC);
    bytes.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    bytes.push(match arch.kind {
        ArchKind::Vanilla => 0,
        ArchKind::SpectralSub => 1,
        ArchKind::WienerMask => 2,
    });
    bytes.push(u8::from(arch.causal));
    bytes.extend_from_slice(&(stats.mean.len() as u32).to_le_bytes());
    for v in stats.mean.iter().chain(&stats.std) {
        bytes.extend_from_slice(&v.as_f64().to_le_bytes());
    }
    bytes.extend_from_slice(&encode_checkpoint(net, None));
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_model<T: Real>(path: impl AsRef<Path>) -> Result<(SeArchitecture, NormStats<T>, Network<T>)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |m: &str| Error::Checkpoint(format!("{}: {m}", path.display()));
    ensure!(bytes.len() >= 14, bad("truncated model header"));
    ensure!(&bytes[..4] == MODEL_MAGIC, bad("bad model magic bytes"));
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    ensure!(version == MODEL_VERSION, bad(&format!("unsupported model version {version}")));
    let kind = match bytes[8] {
        0 => ArchKind::Vanilla,
        1 => ArchKind::SpectralSub,
        2 => ArchKind::WienerMask,
        k => return Err(bad(&format!("unknown architecture tag {k}"))),
    };
    let causal = bytes[9] != 0;
    let channels = u32::from_le_bytes(bytes[10..14].try_into().expect("4 bytes")) as usize;
    let stats_end = 14 + 16 * channels;
    ensure!(bytes.len() >= stats_end, bad("truncated normalisation block"));
    let read = |i: usize| T::lit(f64::from_le_bytes(bytes[14 + 8 * i..22 + 8 * i].try_into().expect("8 bytes")));
    let stats = NormStats { mean: (0..channels).map(read).collect(), std: (channels..2 * channels).map(read).collect() };
    let (ckpt, used) = decode_checkpoint::<T>(&bytes[stats_end..])?;
    ensure!(stats_end + used == bytes.len(), bad("trailing bytes after checkpoint"));
    Ok((SeArchitecture { kind, causal }, stats, ckpt.network))
}

pub fn write_history(path: impl AsRef<Path>, history: &[EpochRecord]) -> Result<()> {
    write_text(path.as_ref(), &history_csv(history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::ConvLayer;
    use rand::SeedableRng;

    fn constant_net(value: f64, causal: bool) -> Network<f64> {
        let padding = if causal { Padding::Causal } else { Padding::Centered };
        let mut l = ConvLayer::zeros(N_CHANNELS, N_CHANNELS, 1, padding, Activation::Linear).unwrap();
        l.bias.iter_mut().for_each(|b| *b = value);
        Network::new(vec![l], 0).unwrap()
    }

    fn random_features(seed: u64, frames: usize) -> CiFeatureSequence<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        CiFeatureSequence::new(Matrix::from_fn(frames, N_CHANNELS, |_, _| rng.random_range(0.0..50.0)), 800.0)
    }

    #[test]
    fn parameter_count() {
        for arch in SeArchitecture::all() {
            let net = build_model::<f64>(arch, &ModelConfig::default()).unwrap();
            assert_eq!(net.layers().len(), 7);
            let formula: usize = net.layers().iter().map(|l| l.out_channels * l.in_channels * l.kernel + l.out_channels).sum();
            assert_eq!(net.param_count(), formula);
            assert_eq!(net.param_count(), 120_337);
            assert_eq!(net.receptive_field(), 29);
        }
    }

    #[test]
    fn seeded_builds_repeat() {
        let arch = SeArchitecture::new(ArchKind::WienerMask, true);
        let cfg = ModelConfig { seed: 42, ..ModelConfig::default() };
        assert_eq!(build_model::<f64>(arch, &cfg).unwrap(), build_model::<f64>(arch, &cfg).unwrap());
        let other = ModelConfig { seed: 43, ..cfg };
        assert_ne!(build_model::<f64>(arch, &cfg).unwrap(), build_model::<f64>(arch, &other).unwrap());
    }

    #[test]
    fn names_round_trip() {
        for arch in SeArchitecture::all() {
            assert_eq!(arch.to_string().parse::<SeArchitecture>().unwrap(), arch);
        }
        assert_eq!("wiener-cnn-causal".parse::<SeArchitecture>().unwrap(), SeArchitecture::new(ArchKind::WienerMask, true));
        assert!("lstm".parse::<SeArchitecture>().is_err());
    }

    #[test]
    fn unit_mask_is_identity() {
        let y = random_features(1, 40);
        let stats = NormStats::fit([&y]).unwrap();
        let arch = SeArchitecture::new(ArchKind::WienerMask, false);
        let out = enhance(&y, &constant_net(1.0, false), arch, &stats).unwrap();
        assert_eq!(out, y);
    }

    #[test]
    fn spectral_subtraction_edges() {
        let y = random_features(2, 40);
        let stats = NormStats::fit([&y]).unwrap();
        let arch = SeArchitecture::new(ArchKind::SpectralSub, true);
        let silent = enhance(&y, &constant_net(-1e6, true), arch, &stats).unwrap();
        assert_eq!(silent, y);
        let loud = enhance(&y, &constant_net(1e3, true), arch, &stats).unwrap();
        assert!(loud.features.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn vanilla_identity_statistics() {
        let y = random_features(3, 40);
        let stats = NormStats::<f64>::identity(N_CHANNELS);
        let arch = SeArchitecture::new(ArchKind::Vanilla, false);
        let mut l = ConvLayer::zeros(N_CHANNELS, N_CHANNELS, 1, Padding::Centered, Activation::Linear).unwrap();
        for c in 0..N_CHANNELS {
            l.set_weight(c, c, 0, 1.0);
        }
        let out = enhance(&y, &Network::new(vec![l], 0).unwrap(), arch, &stats).unwrap();
        for (a, b) in out.features.as_slice().iter().zip(y.features.as_slice()) {
            assert!((a - b).abs() < 1e-12 * b.max(1.0));
        }
    }

    #[test]
    fn nonfinite_network_output_rejected() {
        let y = random_features(4, 40);
        let stats = NormStats::fit([&y]).unwrap();
        let arch = SeArchitecture::new(ArchKind::WienerMask, false);
        assert!(matches!(enhance(&y, &constant_net(f64::NAN, false), arch, &stats), Err(Error::NonFinite(_))));
        let narrow = CiFeatureSequence::new(Matrix::zeros(40, 5), 800.0);
        assert!(enhance(&narrow, &constant_net(1.0, false), arch, &stats).is_err());
    }

    #[test]
    fn mask_clamp_flag() {
        let y = random_features(5, 40);
        let stats = NormStats::fit([&y]).unwrap();
        let arch = SeArchitecture::new(ArchKind::WienerMask, false);
        let net = constant_net(3.0, false);
        let raw = enhance(&y, &net, arch, &stats).unwrap();
        let clamped = enhance_with(&y, &net, arch, &stats, EnhanceOptions { clamp_mask: true }).unwrap();
        for ((r, c), v) in raw.features.as_slice().iter().zip(clamped.features.as_slice()).zip(y.features.as_slice()) {
            assert_eq!(*r, 3.0 * v);
            assert_eq!(*c, 2.0 * v);
        }
    }

    #[test]
    fn norm_stats_floor() {
        let flat = CiFeatureSequence::new(Matrix::from_fn(10, N_CHANNELS, |_, _| 4.0), 800.0);
        let stats = NormStats::fit([&flat]).unwrap();
        assert!(stats.std.iter().all(|&s| s == STD_FLOOR));
        assert!(stats.mean.iter().all(|&m| (m - 5f64.ln()).abs() < 1e-12));
        assert!(NormStats::<f64>::fit([]).is_err());
    }

    #[test]
    fn best_epoch_selection() {
        assert_eq!(select_best_epoch(&[0.9, 0.5, 0.6]), Some(2));
        assert_eq!(select_best_epoch(&[0.4, 0.4]), Some(1));
        assert_eq!(select_best_epoch(&[]), None);
    }

    fn tiny_cfg(epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: 2,
            adam: AdamConfig { lr: 3e-3, ..AdamConfig::default() },
            seed: 7,
            dev_selection: true,
            segment_frames: Some(48),
            model: ModelConfig { hidden_layers: 2, hidden_channels: 8, kernel: 3, seed: 0 },
        }
    }

    fn identity_pairs(seed: u64, n: usize) -> Vec<TrainingPair<f64>> {
        (0..n)
            .map(|i| {
                let clean = random_features(seed + i as u64, 64);
                let noise = CiFeatureSequence::new(Matrix::zeros(64, N_CHANNELS), 800.0);
                TrainingPair { noisy: clean.clone(), clean, noise }
            })
            .collect()
    }

    #[test]
    fn identity_task_is_learnable() {
        let train_set = identity_pairs(10, 6);
        let dev_set = identity_pairs(100, 2);
        let arch = SeArchitecture::new(ArchKind::WienerMask, true);
        let out = train(arch, &train_set, &dev_set, &tiny_cfg(15)).unwrap();
        assert_eq!(out.history.len(), 15);
        let best = out.history[out.best_epoch - 1].dev_mse;
        assert!(best < out.history[0].dev_mse, "{:?}", out.history);
        assert!(best < out.initial_dev_mse);
        assert_eq!(Some(out.best_epoch), select_best_epoch(&out.history.iter().map(|r| r.dev_mse).collect::<Vec<_>>()));
    }

    #[test]
    fn training_is_deterministic_and_validates_input() {
        let train_set = identity_pairs(20, 4);
        let dev_set = identity_pairs(200, 2);
        let arch = SeArchitecture::new(ArchKind::SpectralSub, false);
        let a = train(arch, &train_set, &dev_set, &tiny_cfg(3)).unwrap();
        let b = train(arch, &train_set, &dev_set, &tiny_cfg(3)).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.network, b.network);
        assert!(train(arch, &[], &dev_set, &tiny_cfg(3)).is_err());
        assert!(train(arch, &train_set, &[], &tiny_cfg(3)).is_err());
        assert!(train(arch, &train_set, &dev_set, &tiny_cfg(0)).is_err());
    }

    #[test]
    fn model_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        let arch = SeArchitecture::new(ArchKind::Vanilla, true);
        let net = build_model::<f64>(arch, &ModelConfig { hidden_layers: 1, hidden_channels: 4, kernel: 3, seed: 5 }).unwrap();
        let y = random_features(6, 50);
        let stats = NormStats::fit([&y]).unwrap();
        save_model(&path, arch, &stats, &net).unwrap();
        let (a2, s2, n2) = load_model::<f64>(&path).unwrap();
        assert_eq!((a2, &s2, &n2), (arch, &stats, &net));
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[1] = 0;
        std::fs::write(&path, &bytes).unwrap();
        assert!(load_model::<f64>(&path).is_err());
    }

    #[test]
    fn history_format() {
        let h = [EpochRecord { epoch: 1, train_mse: 0.5, dev_mse: 0.25 }];
        assert_eq!(history_csv(&h), "epoch,train_mse,dev_mse\n1,0.5,0.25\n");
    }
}
