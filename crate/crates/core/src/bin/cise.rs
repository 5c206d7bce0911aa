use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cise::audio::{load_wav, mix_at_snr, store_wav, AudioSignal, Split};
use cise::classic::{estimate_noise, logmmse, wiener_as};
use cise::features::{select_n_of_m, render_electrodogram, CiFeatureSequence, DEFAULT_N_SELECT};
use cise::harness::{
    prepare_corpus, render_report, run_experiment_with, synth_corpus, training_pairs, ExperimentConfig,
    ExperimentReport, Frontend, System, TrainedModel,
};
use cise::metrics::{ecm, feature_mse};
use cise::models::{enhance_with, load_model, write_history, EnhanceOptions, SeArchitecture};
use cise::{Error, Result};

#[derive(Parser)]
#[command(name = "cise", version, about = "Speech enhancement in cochlear-implant feature space")]
struct Cli {
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic speech corpus and car noises.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 340)]
        n_utts: usize,
    },
    /// Mix a speech file with noise at a given SNR.
    Mix {
        #[arg(long)]
        speech: PathBuf,
        #[arg(long)]
        noise: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        snr: f64,
        #[arg(long)]
        out: PathBuf,
        /// Also write the scaled noise alone.
        #[arg(long)]
        noise_out: Option<PathBuf>,
    },
    /// Compute 22-channel CI features of a WAV file.
    Features {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the power spectrogram.
        #[arg(long)]
        spectrogram: Option<PathBuf>,
    },
    /// Train one CNN architecture on the configured corpus.
    Train {
        #[arg(long)]
        arch: SeArchitecture,
        /// Output directory for the model, history and corpus.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Enhance a noisy WAV file with a trained model or a classic baseline.
    Enhance {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, conflicts_with = "system", required_unless_present = "system")]
        model: Option<PathBuf>,
        /// `wiener-as` or `logmmse`.
        #[arg(long)]
        system: Option<System>,
        #[arg(long)]
        clamp_mask: bool,
    },
    /// Render the n-of-m electrodogram of a WAV file or feature CSV.
    Electrodogram {
        #[arg(long)]
        input: PathBuf,
        /// Output path prefix; `.csv` and `.png` are written.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_N_SELECT)]
        n: usize,
    },
    /// Score processed features against clean features (WAV or CSV inputs).
    Evaluate {
        #[arg(long)]
        clean: PathBuf,
        #[arg(long)]
        processed: PathBuf,
    },
    /// Run the full experiment and write a report under a run directory.
    Experiment {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Re-render plots from a report CSV.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Config file plus one flag per config key.
#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<String>,
    #[arg(long)]
    n_utts: Option<String>,
    #[arg(long)]
    noise_dir: Option<String>,
    #[arg(long)]
    split: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    snrs: Option<String>,
    #[arg(long)]
    systems: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    segment_frames: Option<String>,
    #[arg(long)]
    dev_selection: Option<String>,
    #[arg(long)]
    hidden_layers: Option<String>,
    #[arg(long)]
    hidden_channels: Option<String>,
    #[arg(long)]
    kernel: Option<String>,
    #[arg(long)]
    precision: Option<String>,
    #[arg(long)]
    clamp_mask: Option<String>,
    #[arg(long)]
    max_test_utts: Option<String>,
    #[arg(long)]
    out_dir: Option<String>,
}

impl ConfigArgs {
    fn resolve(&self, seed: Option<u64>) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        let overrides = [
            ("corpus", &self.corpus),
            ("n_utts", &self.n_utts),
            ("noise_dir", &self.noise_dir),
            ("split", &self.split),
            ("snrs", &self.snrs),
            ("systems", &self.systems),
            ("epochs", &self.epochs),
            ("batch_size", &self.batch_size),
            ("lr", &self.lr),
            ("segment_frames", &self.segment_frames),
            ("dev_selection", &self.dev_selection),
            ("hidden_layers", &self.hidden_layers),
            ("hidden_channels", &self.hidden_channels),
            ("kernel", &self.kernel),
            ("precision", &self.precision),
            ("clamp_mask", &self.clamp_mask),
            ("max_test_utts", &self.max_test_utts),
            ("out_dir", &self.out_dir),
        ];
        for (key, value) in overrides {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        if let Some(s) = seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn load_features(path: &Path, frontend: &Frontend) -> Result<CiFeatureSequence<f64>> {
    let is_csv = path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        CiFeatureSequence::read_csv(path, frontend.window.frame_rate())
    } else {
        frontend.features(&load_wav(path)?)
    }
}

/// Scale signals jointly so the loudest sample stays below full scale.
fn fit_to_full_scale(signals: &mut [&mut AudioSignal<f64>]) -> f64 {
    let peak = signals.iter().flat_map(|s| s.samples.iter()).fold(0.0f64, |m, v| m.max(v.abs()));
    let gain = if peak > 0.99 { 0.99 / peak } else { 1.0 };
    for s in signals.iter_mut() {
        s.samples.iter_mut().for_each(|v| *v *= gain);
    }
    gain
}

fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed.unwrap_or(0);
    match cli.command {
        Command::Synth { out, n_utts } => {
            let corpus = synth_corpus(&out, n_utts, seed)?;
            println!("wrote {} utterances to {}", corpus.speech.len(), corpus.speech_dir.display());
            println!("wrote {} noises to {}", corpus.noises.len(), corpus.noise_dir.display());
        }
        Command::Mix { speech, noise, snr, out, noise_out } => {
            let mut mix = mix_at_snr(&load_wav::<f64>(&speech)?, &load_wav(&noise)?, snr, seed)?;
            let gain = fit_to_full_scale(&mut [&mut mix.mixture, &mut mix.noise_scaled]);
            if gain < 1.0 {
                eprintln!("scaled output by {gain:.4} to avoid clipping");
            }
            store_wav(&mix.mixture, &out)?;
            if let Some(p) = noise_out {
                store_wav(&mix.noise_scaled, p)?;
            }
            println!("snr {:.3} dB, noise offset {}, gain {:.6}", mix.realized_snr_db(), mix.noise_offset, mix.noise_gain);
        }
        Command::Features { input, out, spectrogram } => {
            let frontend = Frontend::new()?;
            let spec = frontend.spectrogram(&load_wav(&input)?)?;
            let features = frontend.features_of(&spec)?;
            features.write_csv(&out)?;
            if let Some(p) = spectrogram {
                spec.write_csv(p)?;
            }
            println!("{} frames x {} channels", features.n_frames(), features.n_channels());
        }
        Command::Train { arch, out, config } => {
            let cfg = config.resolve(cli.seed)?;
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            let frontend = Frontend::new()?;
            let corpus = prepare_corpus(&cfg, &out)?;
            let train = training_pairs(&corpus, Split::Train, &cfg, &frontend)?;
            let dev = training_pairs(&corpus, Split::Dev, &cfg, &frontend)?;
            let model = TrainedModel::train(arch, &train, &dev, &cfg, |r| {
                eprintln!("epoch {:>3}: train {:.6e} dev {:.6e}", r.epoch, r.train_mse, r.dev_mse)
            })?;
            model.save(out.join("model.bin"))?;
            write_history(out.join("history.csv"), model.history())?;
            println!("{arch}: best epoch {}, model in {}", model.best_epoch(), out.join("model.bin").display());
        }
        Command::Enhance { input, out, model, system, clamp_mask } => {
            let frontend = Frontend::new()?;
            let spec = frontend.spectrogram(&load_wav(&input)?)?;
            let enhanced = match (model, system) {
                (Some(path), _) => {
                    let (arch, stats, net) = load_model::<f64>(&path)?;
                    enhance_with(&frontend.features_of(&spec)?, &net, arch, &stats, EnhanceOptions { clamp_mask })?
                }
                (None, Some(System::WienerAs)) => frontend.features_of(&wiener_as(&spec, &estimate_noise(&spec)?)?)?,
                (None, Some(System::LogMmse)) => frontend.features_of(&logmmse(&spec, &estimate_noise(&spec)?)?)?,
                (None, Some(other)) => {
                    return Err(Error::InvalidArgument(format!("--system accepts wiener-as or logmmse, not {other}")))
                }
                (None, None) => unreachable!("clap requires --model or --system"),
            };
            enhanced.write_csv(&out)?;
            println!("{} frames written to {}", enhanced.n_frames(), out.display());
        }
        Command::Electrodogram { input, out, n } => {
            let features = load_features(&input, &Frontend::new()?)?;
            let e = select_n_of_m(&features, n)?;
            render_electrodogram(&e, &out)?;
            println!("wrote {} and {}", out.with_extension("csv").display(), out.with_extension("png").display());
        }
        Command::Evaluate { clean, processed } => {
            let frontend = Frontend::new()?;
            let c = load_features(&clean, &frontend)?;
            let p = load_features(&processed, &frontend)?;
            println!("ecm {:.6}", ecm(&c, &p)?.value);
            println!("feature_mse {:.6e}", feature_mse(&c, &p)?);
        }
        Command::Experiment { config } => {
            let cfg = config.resolve(cli.seed)?;
            let outcome = run_experiment_with(&cfg, |msg| eprintln!("{msg}"))?;
            print!("{}", outcome.report.to_csv());
            println!("results in {}", outcome.run_dir.display());
        }
        Command::Report { input, out } => {
            let report = ExperimentReport::read_csv(&input)?;
            for path in render_report(&report, &out)? {
                println!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}
