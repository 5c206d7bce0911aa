//! End-to-end experiment: corpus, multi-condition training, enhancement by every system, ECM report.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rand::Rng;

use crate::audio::{load_wav, mix_at_snr, scan_wav_dir, split_manifest, write_text, AudioSignal, DatasetManifest, Split};
use crate::classic::{estimate_noise, logmmse, wiener_as};
use crate::dsp::{analyze, PowerSpectrogram, WindowConfig, DEFAULT_PRE_EMPHASIS};
use crate::error::{ensure, Error, Result};
use crate::features::{build_filterbank, extract_features, CiFeatureSequence, FilterBank};
use crate::metrics::ecm;
use crate::models::{
    enhance_with, save_model, train_with_progress, write_history, EnhanceOptions, EpochRecord, SeArchitecture,
    TrainOutcome, TrainingPair,
};
use crate::rng;
use crate::scalar::Real;

use super::config::{CorpusSource, ExperimentConfig, Precision, System};
use super::report::{render_report, ExperimentReport, ReportMetadata, ReportRecord};
use super::synth::{synth_car_noise, synth_corpus, CAR_NOISES, NOISE_SECONDS};

/// Default analysis chain: pre-emphasis, STFT power, 22-channel filterbank.
#[derive(Clone, Debug)]
pub struct Frontend {
    pub window: WindowConfig<f64>,
    pub filterbank: FilterBank<f64>,
    pub pre_emphasis: f64,
}

impl Frontend {
    pub fn new() -> Result<Self> {
        let window = WindowConfig::default();
        let filterbank = build_filterbank(window.fft_size, window.sample_rate)?;
        Ok(Self { window, filterbank, pre_emphasis: DEFAULT_PRE_EMPHASIS })
    }

    pub fn spectrogram(&self, signal: &AudioSignal<f64>) -> Result<PowerSpectrogram<f64>> {
        analyze(signal, &self.window, self.pre_emphasis)
    }

    pub fn features_of(&self, spec: &PowerSpectrogram<f64>) -> Result<CiFeatureSequence<f64>> {
        extract_features(spec, &self.filterbank)
    }

    pub fn features(&self, signal: &AudioSignal<f64>) -> Result<CiFeatureSequence<f64>> {
        self.features_of(&self.spectrogram(signal)?)
    }
}

#[derive(Clone, Debug)]
pub struct NamedSignal {
    pub id: String,
    pub signal: AudioSignal<f64>,
}

#[derive(Clone, Debug)]
pub struct Corpus {
    pub manifest: DatasetManifest,
    /// Speech in manifest order.
    pub speech: Vec<NamedSignal>,
    pub noises: Vec<NamedSignal>,
}

impl Corpus {
    pub fn split(&self, which: Split) -> Vec<&NamedSignal> {
        self.manifest.entries.iter().zip(&self.speech).filter(|(e, _)| e.split == which).map(|(_, s)| s).collect()
    }
}

fn load_all(entries: &[(String, PathBuf)]) -> Result<Vec<NamedSignal>> {
    entries.iter().map(|(id, path)| Ok(NamedSignal { id: id.clone(), signal: load_wav(path)? })).collect()
}

/// Resolve (synthesising if needed) speech and noise, split the speech and write `manifest.tsv`.
pub fn prepare_corpus(cfg: &ExperimentConfig, work_dir: &Path) -> Result<Corpus> {
    let corpus_dir = work_dir.join("corpus");
    let speech_dir = match &cfg.corpus {
        CorpusSource::Synthetic { n_utts } => synth_corpus(&corpus_dir, *n_utts, cfg.seed)?.speech_dir,
        CorpusSource::Directory(d) => d.clone(),
    };
    let noise_dir = match (&cfg.noise_dir, &cfg.corpus) {
        (Some(d), _) => d.clone(),
        (None, CorpusSource::Synthetic { .. }) => corpus_dir.join("noise"),
        (None, CorpusSource::Directory(_)) => {
            let d = corpus_dir.join("noise");
            fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
            for (i, profile) in CAR_NOISES.iter().enumerate() {
                let noise = synth_car_noise(profile, NOISE_SECONDS, rng::derive_seed(cfg.seed, "noise", i as u64));
                crate::audio::store_wav(&noise, d.join(format!("{}.wav", profile.name)))?;
            }
            d
        }
    };
    let speech_entries = scan_wav_dir(&speech_dir)?;
    let noise_entries = scan_wav_dir(&noise_dir)?;
    ensure!(!noise_entries.is_empty(), Error::InvalidArgument(format!("no noise WAVs in {}", noise_dir.display())));
    let manifest = split_manifest(&speech_entries, cfg.split, cfg.seed)?;
    manifest.write(work_dir.join("manifest.tsv"))?;
    Ok(Corpus { manifest, speech: load_all(&speech_entries)?, noises: load_all(&noise_entries)? })
}

/// One mixture per utterance with a seeded noise type and SNR drawn from the configured list.
pub fn training_pairs(
    corpus: &Corpus,
    which: Split,
    cfg: &ExperimentConfig,
    frontend: &Frontend,
) -> Result<Vec<TrainingPair<f64>>> {
    corpus
        .split(which)
        .into_iter()
        .enumerate()
        .map(|(j, utt)| {
            let mut rng = rng::stream(cfg.seed, &format!("{which}-mix"), j as u64);
            let noise = &corpus.noises[rng.random_range(0..corpus.noises.len())];
            let snr = cfg.snrs[rng.random_range(0..cfg.snrs.len())];
            let mix = mix_at_snr(&utt.signal, &noise.signal, snr, rng.random())
                .map_err(|e| e.context(format!("mixing {} with {}", utt.id, noise.id)))?;
            Ok(TrainingPair {
                noisy: frontend.features(&mix.mixture)?,
                clean: frontend.features(&mix.clean)?,
                noise: frontend.features(&mix.noise_scaled)?,
            })
        })
        .collect()
}

fn cast_sequence<T: Real, U: Real>(s: &CiFeatureSequence<T>) -> CiFeatureSequence<U> {
    CiFeatureSequence::new(s.features.cast(), s.frame_rate)
}

fn cast_pairs<U: Real>(pairs: &[TrainingPair<f64>]) -> Vec<TrainingPair<U>> {
    pairs
        .iter()
        .map(|p| TrainingPair {
            noisy: cast_sequence(&p.noisy),
            clean: cast_sequence(&p.clean),
            noise: cast_sequence(&p.noise),
        })
        .collect()
}

/// A trained CNN system in whichever precision it was trained.
#[derive(Clone, Debug)]
pub enum TrainedModel {
    F32(TrainOutcome<f32>),
    F64(TrainOutcome<f64>),
}

impl TrainedModel {
    pub fn train(
        arch: SeArchitecture,
        train_set: &[TrainingPair<f64>],
        dev_set: &[TrainingPair<f64>],
        cfg: &ExperimentConfig,
        progress: impl FnMut(&EpochRecord),
    ) -> Result<Self> {
        let mut tc = cfg.train.clone();
        tc.seed = rng::derive_seed(cfg.seed, "train", 0);
        Ok(match cfg.precision {
            Precision::F32 => {
                Self::F32(train_with_progress(arch, &cast_pairs(train_set), &cast_pairs(dev_set), &tc, progress)?)
            }
            Precision::F64 => Self::F64(train_with_progress(arch, train_set, dev_set, &tc, progress)?),
        })
    }

    pub fn arch(&self) -> SeArchitecture {
        match self {
            Self::F32(o) => o.arch,
            Self::F64(o) => o.arch,
        }
    }

    pub fn history(&self) -> &[EpochRecord] {
        match self {
            Self::F32(o) => &o.history,
            Self::F64(o) => &o.history,
        }
    }

    pub fn best_epoch(&self) -> usize {
        match self {
            Self::F32(o) => o.best_epoch,
            Self::F64(o) => o.best_epoch,
        }
    }

    pub fn enhance(&self, noisy: &CiFeatureSequence<f64>, opts: EnhanceOptions) -> Result<CiFeatureSequence<f64>> {
        match self {
            Self::F32(o) => {
                let out = enhance_with(&cast_sequence::<f64, f32>(noisy), &o.network, o.arch, &o.stats, opts)?;
                Ok(cast_sequence(&out))
            }
            Self::F64(o) => enhance_with(noisy, &o.network, o.arch, &o.stats, opts),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        match self {
            Self::F32(o) => save_model(path, o.arch, &o.stats, &o.network),
            Self::F64(o) => save_model(path, o.arch, &o.stats, &o.network),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub report: ExperimentReport,
    pub run_dir: PathBuf,
    pub models: Vec<TrainedModel>,
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    run_experiment_with(cfg, |_| {})
}

/// As [`run_experiment`], reporting progress lines to `log`.
pub fn run_experiment_with(cfg: &ExperimentConfig, mut log: impl FnMut(&str)) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let started = utc_timestamp(SystemTime::now());
    let hash = cfg.hash();
    let run_dir = create_run_dir(&cfg.out_dir, &hash)?;
    write_text(&run_dir.join("config.txt"), &cfg.to_text())?;
    log(&format!("run directory {}", run_dir.display()));

    let frontend = Frontend::new()?;
    let corpus = prepare_corpus(cfg, &run_dir)?;
    let (n_train, n_dev, n_test) =
        (corpus.manifest.count(Split::Train), corpus.manifest.count(Split::Dev), corpus.manifest.count(Split::Test));
    log(&format!("corpus: {n_train} train, {n_dev} dev, {n_test} test, {} noises", corpus.noises.len()));
    let mut notes = vec![("split".to_string(), format!("{n_train}/{n_dev}/{n_test}"))];

    let archs = cfg.cnn_architectures();
    let mut models = Vec::with_capacity(archs.len());
    if !archs.is_empty() {
        let train_set = training_pairs(&corpus, Split::Train, cfg, &frontend)?;
        let dev_set = training_pairs(&corpus, Split::Dev, cfg, &frontend)?;
        for arch in archs {
            let clock = Instant::now();
            let model = TrainedModel::train(arch, &train_set, &dev_set, cfg, |r| {
                log(&format!("{arch} epoch {:>3}: train {:.6e} dev {:.6e}", r.epoch, r.train_mse, r.dev_mse))
            })
            .map_err(|e| e.context(format!("training {arch}")))?;
            let secs = clock.elapsed().as_secs_f64();
            log(&format!("{arch}: best epoch {} after {secs:.1} s", model.best_epoch()));
            write_history(run_dir.join(format!("history_{arch}.csv")), model.history())?;
            model.save(run_dir.join(format!("model_{arch}.bin")))?;
            notes.push((format!("train_seconds.{arch}"), format!("{secs:.1}")));
            notes.push((format!("best_epoch.{arch}"), model.best_epoch().to_string()));
            models.push(model);
        }
    }

    let mut test = corpus.split(Split::Test);
    if let Some(cap) = cfg.max_test_utts {
        test.truncate(cap);
    }
    let clean: Vec<CiFeatureSequence<f64>> = test.iter().map(|u| frontend.features(&u.signal)).collect::<Result<_>>()?;
    let opts = EnhanceOptions { clamp_mask: cfg.clamp_mask };
    let n_cells = corpus.noises.len() * cfg.snrs.len();
    // sums[system][noise][snr]
    let mut sums = vec![vec![vec![0.0; cfg.snrs.len()]; corpus.noises.len()]; cfg.systems.len()];
    for (ni, noise) in corpus.noises.iter().enumerate() {
        for (si, &snr) in cfg.snrs.iter().enumerate() {
            for (ui, utt) in test.iter().enumerate() {
                let mix_seed = rng::derive_seed(cfg.seed, &format!("test-mix/{}/{snr}", noise.id), ui as u64);
                let mix = mix_at_snr(&utt.signal, &noise.signal, snr, mix_seed)
                    .map_err(|e| e.context(format!("mixing {} with {}", utt.id, noise.id)))?;
                let spec = frontend.spectrogram(&mix.mixture)?;
                let noisy = frontend.features_of(&spec)?;
                let noise_est = if cfg.systems.iter().any(|s| matches!(s, System::WienerAs | System::LogMmse)) {
                    Some(estimate_noise(&spec)?)
                } else {
                    None
                };
                let mut cnn = models.iter();
                for (k, system) in cfg.systems.iter().enumerate() {
                    let processed = match system {
                        System::Noisy => Ok(noisy.clone()),
                        System::Cnn(_) => cnn.next().expect("one model per CNN system").enhance(&noisy, opts),
                        System::WienerAs => wiener_as(&spec, noise_est.as_ref().expect("estimated"))
                            .and_then(|s| frontend.features_of(&s)),
                        System::LogMmse => logmmse(&spec, noise_est.as_ref().expect("estimated"))
                            .and_then(|s| frontend.features_of(&s)),
                    };
                    let score = processed
                        .and_then(|p| ecm(&clean[ui], &p))
                        .map_err(|e| e.context(format!("utterance {}, system {system}, {} at {snr} dB", utt.id, noise.id)))?;
                    sums[k][ni][si] += score.value;
                }
            }
            log(&format!("scored {} at {snr} dB ({}/{n_cells})", noise.id, ni * cfg.snrs.len() + si + 1));
        }
    }

    let n = test.len();
    let mut records = Vec::new();
    for (k, system) in cfg.systems.iter().enumerate() {
        for (ni, noise) in corpus.noises.iter().enumerate() {
            for (si, &snr) in cfg.snrs.iter().enumerate() {
                records.push(ReportRecord {
                    system: system.to_string(),
                    noise: noise.id.clone(),
                    snr_db: snr,
                    mean_ecm: sums[k][ni][si] / n as f64,
                    n,
                });
            }
        }
    }
    let metadata =
        ReportMetadata { config_hash: hash, started, finished: utc_timestamp(SystemTime::now()), notes };
    let report = ExperimentReport { records, metadata };
    render_report(&report, &run_dir)?;
    write_text(&run_dir.join("metadata.txt"), &report.metadata.to_text())?;
    Ok(ExperimentOutcome { report, run_dir, models })
}

/// `parent/run-YYYYMMDD-HHMMSS-<hash8>`, suffixed `-2`, `-3`, ... if taken.
pub fn create_run_dir(parent: &Path, config_hash: &str) -> Result<PathBuf> {
    fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    let stamp: String = utc_timestamp(SystemTime::now()).chars().filter(char::is_ascii_digit).collect();
    let base = format!("run-{}-{}-{}", &stamp[..8], &stamp[8..14], &config_hash[..8.min(config_hash.len())]);
    for attempt in 1.. {
        let name = if attempt == 1 { base.clone() } else { format!("{base}-{attempt}") };
        let dir = parent.join(name);
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(Error::io(&dir, e)),
        }
    }
    unreachable!()
}

/// RFC 3339 UTC timestamp with second resolution.
pub fn utc_timestamp(t: SystemTime) -> String {
    let secs = t.duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let (days, rem) = (secs / 86_400, secs % 86_400);
    // Days-to-civil conversion (proleptic Gregorian).
    let z = days as i64 + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z.rem_euclid(146_097);
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let day = doy - (153 * mp + 2) / 5 + 1;
    let month = if mp < 10 { mp + 3 } else { mp - 9 };
    let year = yoe + era * 400 + i64::from(month <= 2);
    format!("{year:04}-{month:02}-{day:02}T{:02}:{:02}:{:02}Z", rem / 3600, rem % 3600 / 60, rem % 60)
}
