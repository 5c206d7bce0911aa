//! Plain-text `key = value` experiment configuration.

use std::fmt;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{ensure, Error, Result};
use crate::models::{ModelConfig, SeArchitecture, TrainConfig};
use crate::neural::AdamConfig;

/// One enhancement system evaluated by the experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum System {
    Noisy,
    Cnn(SeArchitecture),
    WienerAs,
    LogMmse,
}

impl System {
    /// Passthrough, the six CNN variants, then the two classic baselines.
    pub fn all() -> Vec<System> {
        let mut v = vec![System::Noisy];
        v.extend(SeArchitecture::all().into_iter().map(System::Cnn));
        v.extend([System::WienerAs, System::LogMmse]);
        v
    }
}

impl fmt::Display for System {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            System::Noisy => f.write_str("noisy"),
            System::Cnn(a) => write!(f, "{a}"),
            System::WienerAs => f.write_str("wiener-as"),
            System::LogMmse => f.write_str("logmmse"),
        }
    }
}

impl FromStr for System {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "noisy" | "passthrough" => Ok(System::Noisy),
            "wiener-as" => Ok(System::WienerAs),
            "logmmse" => Ok(System::LogMmse),
            other => Ok(System::Cnn(other.parse()?)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        })
    }
}

impl FromStr for Precision {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f32" => Ok(Precision::F32),
            "f64" => Ok(Precision::F64),
            other => Err(Error::Parse(format!("precision must be f32 or f64, got '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum CorpusSource {
    /// Generate this many utterances with the built-in synthesiser.
    Synthetic { n_utts: usize },
    /// Directory of 16 kHz mono WAV files.
    Directory(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub corpus: CorpusSource,
    /// Noise WAV directory; `None` uses the synthetic car noises.
    pub noise_dir: Option<PathBuf>,
    pub split: (f64, f64, f64),
    pub snrs: Vec<f64>,
    pub systems: Vec<System>,
    pub train: TrainConfig,
    /// Scalar type the CNNs are trained and run in.
    pub precision: Precision,
    pub clamp_mask: bool,
    /// Cap on test utterances per (noise, snr) cell.
    pub max_test_utts: Option<usize>,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            corpus: CorpusSource::Synthetic { n_utts: 340 },
            noise_dir: None,
            split: (0.6, 0.1, 0.3),
            snrs: vec![-10.0, -5.0, 0.0, 5.0],
            systems: System::all(),
            train: TrainConfig::default(),
            precision: Precision::F64,
            clamp_mask: false,
            max_test_utts: None,
            out_dir: PathBuf::from("runs"),
        }
    }
}

/// Every recognised key with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("seed", "master seed for corpus, splits, mixing and training"),
    ("corpus", "'synth' or a directory of 16 kHz mono WAV files"),
    ("n_utts", "number of synthetic utterances"),
    ("noise_dir", "'synth' or a directory of noise WAV files"),
    ("split", "train,dev,test fractions"),
    ("snrs", "comma-separated SNRs in dB"),
    ("systems", "comma-separated systems or 'all'"),
    ("epochs", "training epochs"),
    ("batch_size", "utterances per minibatch"),
    ("lr", "Adam learning rate"),
    ("segment_frames", "training crop length in frames, or 'full'"),
    ("dev_selection", "keep the epoch with the lowest dev loss"),
    ("hidden_layers", "tanh layers before the output layer"),
    ("hidden_channels", "channels per hidden layer"),
    ("kernel", "temporal kernel width (odd)"),
    ("precision", "CNN scalar type, f32 or f64"),
    ("clamp_mask", "clamp Wiener masks to [0, 2] at inference"),
    ("max_test_utts", "cap on test utterances, or 'all'"),
    ("out_dir", "parent directory of run directories"),
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Parse(format!("invalid value '{value}' for '{key}'")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| parse(key, s)).collect()
}

fn join<T: fmt::Display>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn optional<T: fmt::Display>(v: Option<T>, none: &str) -> String {
    v.map_or_else(|| none.to_string(), |v| v.to_string())
}

impl ExperimentConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "seed" => self.seed = parse(key, value)?,
            "corpus" => {
                self.corpus = match value {
                    "synth" => CorpusSource::Synthetic { n_utts: self.n_utts() },
                    dir => CorpusSource::Directory(PathBuf::from(dir)),
                }
            }
            "n_utts" => {
                let n = parse(key, value)?;
                if let CorpusSource::Synthetic { n_utts } = &mut self.corpus {
                    *n_utts = n;
                }
            }
            "noise_dir" => self.noise_dir = (value != "synth").then(|| PathBuf::from(value)),
            "split" => {
                let v: Vec<f64> = parse_list(key, value)?;
                ensure!(v.len() == 3, Error::Parse(format!("split needs three fractions, got '{value}'")));
                self.split = (v[0], v[1], v[2]);
            }
            "snrs" => self.snrs = parse_list(key, value)?,
            "systems" => self.systems = if value == "all" { System::all() } else { parse_list(key, value)? },
            "epochs" => self.train.epochs = parse(key, value)?,
            "batch_size" => self.train.batch_size = parse(key, value)?,
            "lr" => self.train.adam.lr = parse(key, value)?,
            "segment_frames" => {
                self.train.segment_frames = if value == "full" { None } else { Some(parse(key, value)?) }
            }
            "dev_selection" => self.train.dev_selection = parse(key, value)?,
            "hidden_layers" => self.train.model.hidden_layers = parse(key, value)?,
            "hidden_channels" => self.train.model.hidden_channels = parse(key, value)?,
            "kernel" => self.train.model.kernel = parse(key, value)?,
            "precision" => self.precision = parse(key, value)?,
            "clamp_mask" => self.clamp_mask = parse(key, value)?,
            "max_test_utts" => self.max_test_utts = if value == "all" { None } else { Some(parse(key, value)?) },
            "out_dir" => self.out_dir = PathBuf::from(value),
            other => return Err(Error::Parse(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    fn n_utts(&self) -> usize {
        match self.corpus {
            CorpusSource::Synthetic { n_utts } => n_utts,
            CorpusSource::Directory(_) => 340,
        }
    }

    /// Parse `key = value` lines over the defaults. `#` starts a comment.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected 'key = value'", lineno + 1)))?;
            cfg.set(key.trim(), value).map_err(|e| e.context(format!("config line {}", lineno + 1)))?;
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text).map_err(|e| e.context(path.display().to_string()))
    }

    /// Canonical text form; [`ExperimentConfig::from_text`] reads it back to an equal config.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (key, _) in KEYS {
            let _ = writeln!(out, "{key} = {}", self.value_of(key));
        }
        out
    }

    fn value_of(&self, key: &str) -> String {
        let t = &self.train;
        match key {
            "seed" => self.seed.to_string(),
            "corpus" => match &self.corpus {
                CorpusSource::Synthetic { .. } => "synth".into(),
                CorpusSource::Directory(d) => d.display().to_string(),
            },
            "n_utts" => self.n_utts().to_string(),
            "noise_dir" => self.noise_dir.as_ref().map_or("synth".into(), |d| d.display().to_string()),
            "split" => format!("{},{},{}", self.split.0, self.split.1, self.split.2),
            "snrs" => join(&self.snrs),
            "systems" => join(&self.systems),
            "epochs" => t.epochs.to_string(),
            "batch_size" => t.batch_size.to_string(),
            "lr" => t.adam.lr.to_string(),
            "segment_frames" => optional(t.segment_frames, "full"),
            "dev_selection" => t.dev_selection.to_string(),
            "hidden_layers" => t.model.hidden_layers.to_string(),
            "hidden_channels" => t.model.hidden_channels.to_string(),
            "kernel" => t.model.kernel.to_string(),
            "precision" => self.precision.to_string(),
            "clamp_mask" => self.clamp_mask.to_string(),
            "max_test_utts" => optional(self.max_test_utts, "all"),
            "out_dir" => self.out_dir.display().to_string(),
            _ => unreachable!("key list and value_of out of sync: {key}"),
        }
    }

    /// SHA-256 of the canonical text without `out_dir`, which does not affect results.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for line in self.to_text().lines().filter(|l| !l.starts_with("out_dir ")) {
            h.update(line.as_bytes());
            h.update(b"\n");
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(!self.snrs.is_empty(), Error::InvalidArgument("snr list is empty".into()));
        ensure!(self.snrs.iter().all(|s| s.is_finite()), Error::InvalidArgument("non-finite SNR".into()));
        ensure!(!self.systems.is_empty(), Error::InvalidArgument("no systems configured".into()));
        ensure!(self.train.epochs >= 1, Error::InvalidArgument("epochs must be >= 1".into()));
        ensure!(self.train.batch_size >= 1, Error::InvalidArgument("batch_size must be >= 1".into()));
        ensure!(self.train.model.kernel % 2 == 1, Error::InvalidArgument("kernel must be odd".into()));
        ensure!(self.train.adam.lr > 0.0, Error::InvalidArgument("lr must be positive".into()));
        ensure!(self.max_test_utts != Some(0), Error::InvalidArgument("max_test_utts must be >= 1".into()));
        if let CorpusSource::Synthetic { n_utts } = self.corpus {
            ensure!(n_utts >= super::synth::MIN_UTTERANCES, Error::InvalidArgument(format!("n_utts = {n_utts} < 10")));
        }
        Ok(())
    }

    pub fn cnn_architectures(&self) -> Vec<SeArchitecture> {
        self.systems
            .iter()
            .filter_map(|s| match s {
                System::Cnn(a) => Some(*a),
                _ => None,
            })
            .collect()
    }
}

/// Small, fast configuration used for smoke runs and determinism checks.
pub fn quick_config() -> ExperimentConfig {
    ExperimentConfig {
        corpus: CorpusSource::Synthetic { n_utts: 12 },
        snrs: vec![-5.0, 5.0],
        train: TrainConfig {
            epochs: 2,
            batch_size: 4,
            adam: AdamConfig::default(),
            seed: 0,
            dev_selection: true,
            segment_frames: Some(64),
            model: ModelConfig { hidden_layers: 1, hidden_channels: 8, kernel: 3, seed: 0 },
        },
        ..ExperimentConfig::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut cfg = ExperimentConfig::default();
        cfg.set("snrs", "-5, 0,60").unwrap();
        cfg.set("systems", "noisy,wiener-cnn-causal,logmmse").unwrap();
        cfg.set("segment_frames", "full").unwrap();
        cfg.set("noise_dir", "/data/noise").unwrap();
        let back = ExperimentConfig::from_text(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        assert_eq!(ExperimentConfig::from_text(&ExperimentConfig::default().to_text()).unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn hash_ignores_out_dir_only() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.out_dir = PathBuf::from("/elsewhere");
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn parse_errors() {
        assert!(ExperimentConfig::from_text("seed 3").is_err());
        assert!(ExperimentConfig::from_text("colour = red").is_err());
        assert!(ExperimentConfig::from_text("epochs = many").is_err());
        assert!(ExperimentConfig::from_text("systems = noisy,lstm").is_err());
        let cfg = ExperimentConfig::from_text("# comment\nseed = 9  # trailing\n\nsnrs=0\n").unwrap();
        assert_eq!((cfg.seed, cfg.snrs.clone()), (9, vec![0.0]));
    }

    #[test]
    fn validation() {
        let mut cfg = ExperimentConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.snrs.clear();
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.systems.clear();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn system_names() {
        let names: Vec<String> = System::all().iter().map(ToString::to_string).collect();
        assert_eq!(
            names,
            [
                "noisy", "vanilla-cnn", "ss-cnn", "wiener-cnn", "vanilla-cnn-causal", "ss-cnn-causal",
                "wiener-cnn-causal", "wiener-as", "logmmse"
            ]
        );
        for s in System::all() {
            assert_eq!(s.to_string().parse::<System>().unwrap(), s);
        }
    }
}
