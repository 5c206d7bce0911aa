use std::fs;

use rustfft::{num_complex::Complex, FftPlanner};

use cise::audio::{load_wav, mix_at_snr, AudioSignal};
use cise::harness::{
    quick_config, run_experiment, synth_car_noise, synth_corpus, synth_speech, ExperimentConfig, ExperimentReport,
    Frontend, System, CAR_NOISES,
};
use cise::metrics::mean_ecm;

/// Fraction of signal energy below `cutoff_hz`, from one full-length FFT.
fn energy_below(signal: &AudioSignal<f64>, cutoff_hz: f64) -> f64 {
    let n = signal.len();
    let mut buf: Vec<Complex<f64>> = signal.samples.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let hz_per_bin = f64::from(signal.sample_rate) / n as f64;
    let (mut low, mut total) = (0.0, 0.0);
    for (k, c) in buf.iter().enumerate().take(n / 2 + 1) {
        let e = c.norm_sqr();
        total += e;
        if (k as f64) * hz_per_bin < cutoff_hz {
            low += e;
        }
    }
    low / total
}

#[test]
fn synthetic_corpus_is_byte_identical_per_seed() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ca = synth_corpus(a.path(), 10, 5).unwrap();
    let cb = synth_corpus(b.path(), 10, 5).unwrap();
    assert_eq!(ca.speech.len(), 10);
    assert_eq!(ca.noises.len(), CAR_NOISES.len());
    for (x, y) in ca.speech.iter().chain(&ca.noises).zip(cb.speech.iter().chain(&cb.noises)) {
        assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap());
    }
    let c = tempfile::tempdir().unwrap();
    let cc = synth_corpus(c.path(), 10, 6).unwrap();
    assert_ne!(fs::read(&ca.speech[0]).unwrap(), fs::read(&cc.speech[0]).unwrap());
    let s: AudioSignal<f64> = load_wav(&ca.speech[3]).unwrap();
    assert!(s.duration_secs() >= 1.0 && s.duration_secs() <= 3.0);
}

#[test]
fn speech_energy_mostly_below_2khz() {
    for i in 0..20 {
        let frac = energy_below(&synth_speech(11, i), 2000.0);
        assert!(frac > 0.6, "utterance {i}: {frac}");
    }
}

#[test]
fn car_noise_energy_below_500hz() {
    for (i, profile) in CAR_NOISES.iter().enumerate() {
        let frac = energy_below(&synth_car_noise(profile, 4.0, i as u64), 500.0);
        assert!(frac > 0.9, "{}: {frac}", profile.name);
    }
}

#[test]
fn clean_and_noisy_features_align() {
    let frontend = Frontend::new().unwrap();
    let speech = synth_speech(1, 1);
    let noise = synth_car_noise(&CAR_NOISES[1], 2.0, 1);
    let mix = mix_at_snr(&speech, &noise, 0.0, 1).unwrap();
    let clean = frontend.features(&mix.clean).unwrap();
    assert_eq!(clean.n_frames(), frontend.features(&mix.mixture).unwrap().n_frames());
    assert_eq!(clean.n_frames(), frontend.features(&mix.noise_scaled).unwrap().n_frames());
}

fn passthrough_config(snrs: Vec<f64>) -> ExperimentConfig {
    ExperimentConfig { systems: vec![System::Noisy], snrs, max_test_utts: Some(4), ..quick_config() }
}

#[test]
fn passthrough_report_matches_direct_mean_ecm() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig { out_dir: dir.path().to_path_buf(), ..passthrough_config(vec![0.0]) };
    let out = run_experiment(&cfg).unwrap();
    assert_eq!(out.report.records.len(), CAR_NOISES.len());

    // Rebuild the same test mixtures independently of the report path.
    let manifest = cise::audio::DatasetManifest::read(out.run_dir.join("manifest.tsv"), cfg.seed).unwrap();
    let frontend = Frontend::new().unwrap();
    let test: Vec<_> = manifest.split(cise::audio::Split::Test).take(4).collect();
    for record in &out.report.records {
        let noise: AudioSignal<f64> =
            load_wav(out.run_dir.join("corpus/noise").join(format!("{}.wav", record.noise))).unwrap();
        let pairs: Vec<_> = test
            .iter()
            .enumerate()
            .map(|(ui, e)| {
                let speech: AudioSignal<f64> = load_wav(&e.path).unwrap();
                let seed = cise::rng::derive_seed(cfg.seed, &format!("test-mix/{}/{}", record.noise, 0.0), ui as u64);
                let mix = mix_at_snr(&speech, &noise, 0.0, seed).unwrap();
                (frontend.features(&mix.clean).unwrap(), frontend.features(&mix.mixture).unwrap())
            })
            .collect();
        assert_eq!(record.n, pairs.len());
        assert_eq!(record.mean_ecm, mean_ecm(&pairs).unwrap());
    }
}

#[test]
fn near_clean_passthrough_scores_high() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig { out_dir: dir.path().to_path_buf(), ..passthrough_config(vec![60.0]) };
    let out = run_experiment(&cfg).unwrap();
    for r in &out.report.records {
        assert!(r.mean_ecm > 0.99, "{r:?}");
    }
}

#[test]
fn quick_experiment_covers_every_cell_and_reingests() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig { out_dir: dir.path().to_path_buf(), max_test_utts: Some(3), ..quick_config() };
    let out = run_experiment(&cfg).unwrap();
    let report = &out.report;
    assert_eq!(report.records.len(), cfg.systems.len() * CAR_NOISES.len() * cfg.snrs.len());
    for system in &cfg.systems {
        for profile in &CAR_NOISES {
            for &snr in &cfg.snrs {
                let r = report.get(&system.to_string(), profile.name, snr).expect("cell present");
                assert!((0.0..=1.0).contains(&r.mean_ecm));
                assert_eq!(r.n, 3);
            }
        }
    }
    let back = ExperimentReport::read_csv(out.run_dir.join("report.csv")).unwrap();
    assert_eq!(back.records, report.records);
    for file in ["config.txt", "metadata.txt", "manifest.tsv", "ecm_car-a.png", "ecm_car-b.png"] {
        assert!(out.run_dir.join(file).exists(), "{file}");
    }
    for arch in cfg.cnn_architectures() {
        let history = fs::read_to_string(out.run_dir.join(format!("history_{arch}.csv"))).unwrap();
        assert_eq!(history.lines().count(), cfg.train.epochs + 1);
        assert!(out.run_dir.join(format!("model_{arch}.bin")).exists());
    }
    let metadata = fs::read_to_string(out.run_dir.join("metadata.txt")).unwrap();
    assert!(metadata.contains(&cfg.hash()));
    let saved = ExperimentConfig::load(out.run_dir.join("config.txt")).unwrap();
    assert_eq!(saved, cfg);
}

#[test]
fn stage_failures_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let empty_noise = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig { out_dir: dir.path().to_path_buf(), ..passthrough_config(vec![0.0]) };
    cfg.noise_dir = Some(empty_noise.path().to_path_buf());
    let err = run_experiment(&cfg).unwrap_err().to_string();
    assert!(err.contains("no noise"), "{err}");
    cfg.snrs.clear();
    assert!(run_experiment(&cfg).is_err());
}
