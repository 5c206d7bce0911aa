//! Deterministic stand-ins for a speech corpus and car-interior noise recordings.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::audio::{store_wav, AudioSignal, PIPELINE_SAMPLE_RATE};
use crate::error::{ensure, Error, Result};
use crate::rng;

pub const MIN_UTTERANCES: usize = 10;
/// Peak amplitude of every generated file.
pub const PEAK: f64 = 0.5;
pub const NOISE_SECONDS: f64 = 12.0;

/// Car-like noise profiles: Butterworth low-pass cutoff and slow gain drift.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CarNoise {
    pub name: &'static str,
    pub cutoff_hz: f64,
    pub drift_depth: f64,
    pub drift_hz: f64,
}

pub const CAR_NOISES: [CarNoise; 2] = [
    CarNoise { name: "car-a", cutoff_hz: 500.0, drift_depth: 0.0, drift_hz: 0.0 },
    CarNoise { name: "car-b", cutoff_hz: 400.0, drift_depth: 0.4, drift_hz: 0.3 },
];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SynthCorpus {
    pub speech_dir: PathBuf,
    pub noise_dir: PathBuf,
    pub speech: Vec<PathBuf>,
    pub noises: Vec<PathBuf>,
}

/// Write `n_utts` speech-like files to `dir/speech` and the car noises to `dir/noise`.
pub fn synth_corpus(dir: impl AsRef<Path>, n_utts: usize, seed: u64) -> Result<SynthCorpus> {
    ensure!(
        n_utts >= MIN_UTTERANCES,
        Error::InvalidArgument(format!("need at least {MIN_UTTERANCES} utterances, got {n_utts}"))
    );
    let dir = dir.as_ref();
    let speech_dir = dir.join("speech");
    let noise_dir = dir.join("noise");
    for d in [&speech_dir, &noise_dir] {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let mut speech = Vec::with_capacity(n_utts);
    for i in 0..n_utts {
        let path = speech_dir.join(format!("utt{i:04}.wav"));
        store_wav(&synth_speech(seed, i as u64), &path)?;
        speech.push(path);
    }
    let mut noises = Vec::new();
    for (i, profile) in CAR_NOISES.iter().enumerate() {
        let path = noise_dir.join(format!("{}.wav", profile.name));
        store_wav(&synth_car_noise(profile, NOISE_SECONDS, rng::derive_seed(seed, "noise", i as u64)), &path)?;
        noises.push(path);
    }
    Ok(SynthCorpus { speech_dir, noise_dir, speech, noises })
}

/// One speech-like utterance of 1 to 3 s.
///
/// A leading pause of at least 150 ms is followed by word-like bursts separated by pauses. Inside
/// the bursts 2 to 4 harmonic complexes (f0 100-300 Hz, 1/h amplitudes up to 4 kHz) sound with
/// their own 3-8 Hz amplitude modulation and slow pitch glide. Unvoiced sounds cover the upper
/// band: fricative-like bursts of high-passed noise in some pauses and word onsets, and faint
/// breath noise under the voiced parts.
pub fn synth_speech(seed: u64, index: u64) -> AudioSignal<f64> {
    let mut rng = rng::stream(seed, "speech", index);
    let fs = f64::from(PIPELINE_SAMPLE_RATE);
    let len = (rng.random_range(1.0..3.0) * fs) as usize;

    let mut gate = vec![0.0; len];
    let mut bursts = Vec::new();
    let mut pos = (rng.random_range(0.15..0.3) * fs) as usize;
    let ramp = (0.01 * fs) as usize;
    while pos < len {
        let on = (rng.random_range(0.15..0.6) * fs) as usize;
        let end = (pos + on).min(len);
        ramped_window(&mut gate[pos..end], ramp);
        bursts.push((pos, end));
        pos = end + (rng.random_range(0.05..0.25) * fs) as usize;
    }

    let mut out = vec![0.0; len];
    for _ in 0..rng.random_range(2..=4) {
        let f0 = rng.random_range(100.0..300.0);
        let glide: f64 = rng.random_range(-0.15..0.15);
        let am_rate = rng.random_range(3.0..8.0);
        let am_depth = rng.random_range(0.5..1.0);
        let am_phase = rng.random_range(0.0..2.0 * PI);
        let level = rng.random_range(0.5..1.0);
        let harmonics: Vec<(f64, f64)> = (1..)
            .take_while(|&h| f64::from(h) * f0 * (1.0 + glide.max(0.0)) < 4000.0)
            .map(|h| (f64::from(h), rng.random_range(0.0..2.0 * PI)))
            .collect();
        let mut phase = 0.0;
        for (n, o) in out.iter_mut().enumerate() {
            if gate[n] == 0.0 {
                phase += 2.0 * PI * f0 / fs;
                continue;
            }
            let t = n as f64 / fs;
            let f = f0 * (1.0 + glide * t / 3.0);
            phase += 2.0 * PI * f / fs;
            let am = 1.0 - am_depth * 0.5 * (1.0 + (2.0 * PI * am_rate * t + am_phase).cos());
            let tone: f64 = harmonics.iter().map(|&(h, ph)| (h * phase + ph).sin() / h).sum();
            *o += level * am * gate[n] * tone;
        }
    }
    add_unvoiced(&mut out, &gate, &bursts, seed, index);
    normalize_peak(&mut out);
    AudioSignal::new(out, PIPELINE_SAMPLE_RATE)
}

/// Raised-cosine on/off ramps of `ramp` samples over a unit window.
fn ramped_window(w: &mut [f64], ramp: usize) {
    let len = w.len();
    for (i, v) in w.iter_mut().enumerate() {
        let edge = i.min(len - 1 - i);
        *v = if edge < ramp { 0.5 - 0.5 * (PI * edge as f64 / ramp as f64).cos() } else { 1.0 };
    }
}

fn add_unvoiced(out: &mut [f64], gate: &[f64], bursts: &[(usize, usize)], seed: u64, index: u64) {
    let mut rng = rng::stream(seed, "speech-unvoiced", index);
    let fs = f64::from(PIPELINE_SAMPLE_RATE);
    let len = out.len();
    let voiced_energy: f64 = out.iter().map(|v| v * v).sum();
    let voiced_samples = gate.iter().filter(|&&g| g > 0.0).count().max(1);
    let voiced_rms = (voiced_energy / voiced_samples as f64).sqrt();

    let mut hiss: Vec<f64> = (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    for section in butterworth_highpass(4, rng.random_range(2500.0..4000.0), fs) {
        section.filter(&mut hiss);
    }
    let hiss_rms = (hiss.iter().map(|v| v * v).sum::<f64>() / len.max(1) as f64).sqrt();
    if hiss_rms == 0.0 {
        return;
    }

    let mut env: Vec<f64> = gate.iter().map(|g| 0.03 * g).collect();
    let ramp = (0.01 * fs) as usize;
    for (i, &(start, end)) in bursts.iter().enumerate() {
        let dur = (rng.random_range(0.04..0.15) * fs) as usize;
        let level = 10f64.powf(rng.random_range(-18.0..-8.0) / 20.0);
        let (a, b) = if rng.random_bool(0.5) {
            // onset frication leading into the burst; never reaches into the leading pause
            let floor = if i == 0 { start } else { bursts[i - 1].1 };
            (start.saturating_sub(dur / 2).max(floor), (start + dur / 2).min(end))
        } else {
            let gap_end = bursts.get(i + 1).map_or(len, |next| next.0);
            (end, (end + dur).min(gap_end))
        };
        if b > a + 2 * ramp {
            let mut w = vec![0.0; b - a];
            ramped_window(&mut w, ramp);
            for (e, wv) in env[a..b].iter_mut().zip(&w) {
                *e = e.max(level * wv);
            }
        }
    }
    let scale = voiced_rms / hiss_rms;
    for ((o, h), e) in out.iter_mut().zip(&hiss).zip(&env) {
        *o += scale * e * h;
    }
}

/// Gaussian noise through an 8th-order Butterworth low-pass, with optional slow gain drift.
pub fn synth_car_noise(profile: &CarNoise, seconds: f64, seed: u64) -> AudioSignal<f64> {
    let mut rng = rng::stream(seed, "car-noise", 0);
    let fs = f64::from(PIPELINE_SAMPLE_RATE);
    let len = (seconds * fs) as usize;
    let mut x: Vec<f64> = (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    for section in butterworth_lowpass(8, profile.cutoff_hz, fs) {
        section.filter(&mut x);
    }
    let drift_phase = rng.random_range(0.0..2.0 * PI);
    for (n, v) in x.iter_mut().enumerate() {
        let t = n as f64 / fs;
        *v *= 1.0 + profile.drift_depth * (2.0 * PI * profile.drift_hz * t + drift_phase).sin();
    }
    normalize_peak(&mut x);
    AudioSignal::new(x, PIPELINE_SAMPLE_RATE)
}

fn normalize_peak(x: &mut [f64]) {
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        let g = PEAK / peak;
        x.iter_mut().for_each(|v| *v *= g);
    }
}

/// Direct-form-I biquad, `a0` normalised to 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    pub fn filter(&self, x: &mut [f64]) {
        let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
        for v in x.iter_mut() {
            let y = self.b[0] * *v + self.b[1] * x1 + self.b[2] * x2 - self.a[0] * y1 - self.a[1] * y2;
            x2 = x1;
            x1 = *v;
            y2 = y1;
            y1 = y;
            *v = y;
        }
    }

    /// Magnitude response at `f` Hz.
    pub fn gain_at(&self, f: f64, fs: f64) -> f64 {
        let w = 2.0 * PI * f / fs;
        let eval = |c0: f64, c1: f64, c2: f64| {
            let re = c0 + c1 * w.cos() + c2 * (2.0 * w).cos();
            let im = -c1 * w.sin() - c2 * (2.0 * w).sin();
            re.hypot(im)
        };
        eval(self.b[0], self.b[1], self.b[2]) / eval(1.0, self.a[0], self.a[1])
    }
}

/// Even-order Butterworth low-pass as cascaded biquads (bilinear transform, pre-warped cutoff).
pub fn butterworth_lowpass(order: usize, cutoff_hz: f64, fs: f64) -> Vec<Biquad> {
    assert!(order % 2 == 0 && order > 0, "order must be even");
    let k = (PI * cutoff_hz / fs).tan();
    (0..order / 2)
        .map(|i| {
            let theta = PI * (2 * i + 1) as f64 / (2 * order) as f64;
            let damping = 2.0 * theta.sin();
            let norm = 1.0 / (1.0 + damping * k + k * k);
            let b0 = k * k * norm;
            Biquad { b: [b0, 2.0 * b0, b0], a: [2.0 * (k * k - 1.0) * norm, (1.0 - damping * k + k * k) * norm] }
        })
        .collect()
}

/// Even-order Butterworth high-pass as cascaded biquads.
pub fn butterworth_highpass(order: usize, cutoff_hz: f64, fs: f64) -> Vec<Biquad> {
    assert!(order % 2 == 0 && order > 0, "order must be even");
    let k = (PI * cutoff_hz / fs).tan();
    (0..order / 2)
        .map(|i| {
            let theta = PI * (2 * i + 1) as f64 / (2 * order) as f64;
            let damping = 2.0 * theta.sin();
            let norm = 1.0 / (1.0 + damping * k + k * k);
            Biquad { b: [norm, -2.0 * norm, norm], a: [2.0 * (k * k - 1.0) * norm, (1.0 - damping * k + k * k) * norm] }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn butterworth_response() {
        let fs = 16_000.0;
        let sections = butterworth_lowpass(8, 500.0, fs);
        let gain = |f: f64| sections.iter().map(|s| s.gain_at(f, fs)).product::<f64>();
        assert!((gain(0.0) - 1.0).abs() < 1e-12);
        assert!((gain(500.0) - 0.5f64.sqrt()).abs() < 1e-9);
        assert!(gain(1000.0) < 10f64.powf(-45.0 / 20.0));
        for f in [50.0, 200.0, 450.0] {
            assert!(gain(f) > 0.7 && gain(f) <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn highpass_response() {
        let fs = 16_000.0;
        let sections = butterworth_highpass(4, 3000.0, fs);
        let gain = |f: f64| sections.iter().map(|s| s.gain_at(f, fs)).product::<f64>();
        assert!((gain(7999.0) - 1.0).abs() < 1e-3);
        assert!((gain(3000.0) - 0.5f64.sqrt()).abs() < 1e-9);
        assert!(gain(1000.0) < 10f64.powf(-35.0 / 20.0));
    }

    #[test]
    fn speech_shape() {
        for i in 0..5 {
            let s = synth_speech(3, i);
            assert!((16_000..=48_000).contains(&s.len()));
            let peak = s.samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!((peak - PEAK).abs() < 1e-12);
            assert!(s.samples[..2400].iter().all(|&v| v == 0.0), "leading pause");
        }
        assert_eq!(synth_speech(3, 1), synth_speech(3, 1));
        assert_ne!(synth_speech(3, 1), synth_speech(4, 1));
    }

    #[test]
    fn too_few_utterances() {
        let dir = tempfile::tempdir().unwrap();
        assert!(synth_corpus(dir.path(), 9, 0).is_err());
    }
}
