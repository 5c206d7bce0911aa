//! Pre-emphasis, Hamming-windowed framing and FFT power spectra.

use std::fmt::Write as _;
use std::path::Path;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::audio::{write_text, AudioSignal, PIPELINE_SAMPLE_RATE};
use crate::error::{ensure, Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Real;

pub const DEFAULT_PRE_EMPHASIS: f64 = 0.97;

/// Analysis framing: 10 ms Hamming windows every 1.25 ms at 16 kHz, 256-point FFT.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowConfig<T> {
    pub window_len: usize,
    pub hop: usize,
    pub fft_size: usize,
    pub sample_rate: u32,
    window: Vec<T>,
}

impl<T: Real> Default for WindowConfig<T> {
    fn default() -> Self {
        Self::new(160, 20, 256, PIPELINE_SAMPLE_RATE).expect("default window config is valid")
    }
}

impl<T: Real> WindowConfig<T> {
    pub fn new(window_len: usize, hop: usize, fft_size: usize, sample_rate: u32) -> Result<Self> {
        ensure!(
            0 < hop && hop <= window_len && window_len <= fft_size,
            Error::InvalidArgument(format!(
                "need 0 < hop ({hop}) <= window_len ({window_len}) <= fft_size ({fft_size})"
            ))
        );
        ensure!(window_len >= 2, Error::InvalidArgument("window_len must be >= 2".into()));
        ensure!(sample_rate > 0, Error::InvalidArgument("sample_rate must be positive".into()));
        Ok(Self { window_len, hop, fft_size, sample_rate, window: hamming(window_len) })
    }

    pub fn window(&self) -> &[T] {
        &self.window
    }

    pub fn n_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn frame_rate(&self) -> f64 {
        f64::from(self.sample_rate) / self.hop as f64
    }

    /// Number of complete frames in a signal of `len` samples.
    pub fn frame_count(&self, len: usize) -> usize {
        if len < self.window_len {
            0
        } else {
            (len - self.window_len) / self.hop + 1
        }
    }
}

/// Symmetric Hamming window, `0.54 - 0.46 cos(2 pi n / (N - 1))`.
pub fn hamming<T: Real>(len: usize) -> Vec<T> {
    let denom = (len.max(2) - 1) as f64;
    (0..len)
        .map(|n| T::lit(0.54 - 0.46 * (2.0 * std::f64::consts::PI * n as f64 / denom).cos()))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct PowerSpectrogram<T> {
    /// `T x (fft_size/2 + 1)` per-bin energies.
    pub frames: Matrix<T>,
    pub frame_rate: f64,
}

impl<T: Real> PowerSpectrogram<T> {
    pub fn n_frames(&self) -> usize {
        self.frames.rows()
    }

    pub fn n_bins(&self) -> usize {
        self.frames.cols()
    }

    pub fn total_power(&self) -> T {
        self.frames.as_slice().iter().copied().sum()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_text(path.as_ref(), &matrix_csv(&self.frames))
    }
}

pub(crate) fn matrix_csv<T: Real>(m: &Matrix<T>) -> String {
    let mut out = String::new();
    for r in 0..m.rows() {
        for (c, v) in m.row(r).iter().enumerate() {
            if c > 0 {
                out.push(',');
            }
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    out
}

/// `y[0] = x[0]`, `y[n] = x[n] - alpha * x[n-1]`.
pub fn pre_emphasize<T: Real>(signal: &AudioSignal<T>, alpha: T) -> AudioSignal<T> {
    let x = &signal.samples;
    let mut y = Vec::with_capacity(x.len());
    for n in 0..x.len() {
        y.push(if n == 0 { x[0] } else { x[n] - alpha * x[n - 1] });
    }
    AudioSignal::new(y, signal.sample_rate)
}

/// Inverse of [`pre_emphasize`]: `x[n] = y[n] + alpha * x[n-1]`.
pub fn de_emphasize<T: Real>(signal: &AudioSignal<T>, alpha: T) -> AudioSignal<T> {
    let mut x: Vec<T> = Vec::with_capacity(signal.len());
    for (n, &y) in signal.samples.iter().enumerate() {
        let prev = if n == 0 { T::zero() } else { x[n - 1] };
        x.push(y + alpha * prev);
    }
    AudioSignal::new(x, signal.sample_rate)
}

/// Split into Hamming-weighted frames; trailing samples that do not fill a frame are dropped.
pub fn frame_and_window<T: Real>(signal: &AudioSignal<T>, cfg: &WindowConfig<T>) -> Result<Matrix<T>> {
    ensure!(
        signal.len() >= cfg.window_len,
        Error::InvalidArgument(format!(
            "signal of {} samples is shorter than one {}-sample window",
            signal.len(),
            cfg.window_len
        ))
    );
    let n_frames = cfg.frame_count(signal.len());
    let mut frames = Matrix::zeros(n_frames, cfg.window_len);
    for t in 0..n_frames {
        let start = t * cfg.hop;
        let src = &signal.samples[start..start + cfg.window_len];
        for ((dst, &s), &w) in frames.row_mut(t).iter_mut().zip(src).zip(&cfg.window) {
            *dst = s * w;
        }
    }
    Ok(frames)
}

/// Squared DFT magnitude of each zero-padded frame, bins `0..=fft_size/2`.
pub fn power_spectrum<T: Real>(frames: &Matrix<T>, cfg: &WindowConfig<T>) -> Result<PowerSpectrogram<T>> {
    ensure!(
        frames.cols() <= cfg.fft_size,
        Error::Shape(format!("frame length {} exceeds fft_size {}", frames.cols(), cfg.fft_size))
    );
    let fft = FftPlanner::<T>::new().plan_fft_forward(cfg.fft_size);
    let n_bins = cfg.n_bins();
    let mut out = Matrix::zeros(frames.rows(), n_bins);
    let mut buf = vec![Complex::new(T::zero(), T::zero()); cfg.fft_size];
    let mut scratch = vec![Complex::new(T::zero(), T::zero()); fft.get_inplace_scratch_len()];
    for t in 0..frames.rows() {
        for (b, &x) in buf.iter_mut().zip(frames.row(t)) {
            *b = Complex::new(x, T::zero());
        }
        for b in buf.iter_mut().skip(frames.cols()) {
            *b = Complex::new(T::zero(), T::zero());
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (dst, z) in out.row_mut(t).iter_mut().zip(&buf[..n_bins]) {
            *dst = z.norm_sqr();
        }
    }
    Ok(PowerSpectrogram { frames: out, frame_rate: cfg.frame_rate() })
}

/// Pre-emphasis, framing and power spectrum in one call.
pub fn analyze<T: Real>(signal: &AudioSignal<T>, cfg: &WindowConfig<T>, alpha: T) -> Result<PowerSpectrogram<T>> {
    let emphasized = pre_emphasize(signal, alpha);
    power_spectrum(&frame_and_window(&emphasized, cfg)?, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn sig(x: Vec<f64>) -> AudioSignal<f64> {
        AudioSignal::new(x, 16_000)
    }

    // Direct O(N^2) DFT energies.
    fn dft_energy(x: &[f64], n: usize) -> Vec<f64> {
        (0..=n / 2)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (j, &v) in x.iter().enumerate() {
                    let ang = -2.0 * std::f64::consts::PI * (k * j) as f64 / n as f64;
                    re += v * ang.cos();
                    im += v * ang.sin();
                }
                re * re + im * im
            })
            .collect()
    }

    #[test]
    fn pre_emphasis_examples() {
        let x = sig(vec![0.3, -0.2, 0.9]);
        assert_eq!(pre_emphasize(&x, 0.0), x);
        let y = pre_emphasize(&sig(vec![1.0, 1.0, 1.0]), 0.97);
        for (a, b) in y.samples.iter().zip([1.0, 0.03, 0.03]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(pre_emphasize(&sig(vec![1.0, 0.0]), 0.97).samples, vec![1.0, -0.97]);
        assert!(pre_emphasize(&sig(vec![]), 0.97).is_empty());
    }

    #[test]
    fn frame_counts() {
        let cfg = WindowConfig::<f64>::default();
        assert_eq!(frame_and_window(&sig(vec![0.0; 16_000]), &cfg).unwrap().rows(), 793);
        assert_eq!(frame_and_window(&sig(vec![0.0; 160]), &cfg).unwrap().rows(), 1);
        assert!(frame_and_window(&sig(vec![0.0; 159]), &cfg).is_err());
    }

    #[test]
    fn constant_signal_frames_equal_window() {
        let cfg = WindowConfig::<f64>::default();
        let frames = frame_and_window(&sig(vec![1.0; 400]), &cfg).unwrap();
        for t in 0..frames.rows() {
            assert_eq!(frames.row(t), cfg.window());
        }
        let w = cfg.window();
        assert!((w[0] - 0.08).abs() < 1e-15 && (w[159] - 0.08).abs() < 1e-15);
        for n in 0..160 {
            assert!((w[n] - w[159 - n]).abs() < 1e-15);
        }
    }

    #[test]
    fn invalid_config_rejected() {
        assert!(WindowConfig::<f64>::new(160, 0, 256, 16_000).is_err());
        assert!(WindowConfig::<f64>::new(160, 200, 256, 16_000).is_err());
        assert!(WindowConfig::<f64>::new(300, 20, 256, 16_000).is_err());
    }

    #[test]
    fn zero_frame_and_dc_frame() {
        let cfg = WindowConfig::<f64>::default();
        let spec = power_spectrum(&Matrix::zeros(2, 160), &cfg).unwrap();
        assert!(spec.frames.as_slice().iter().all(|&v| v == 0.0));

        let c = 0.7;
        let dc = Matrix::from_vec(1, 160, vec![c; 160]).unwrap();
        let spec = power_spectrum(&dc, &cfg).unwrap();
        let oracle = dft_energy(&vec![c; 160], 256);
        assert!((spec.frames.get(0, 0) - (c * 160.0).powi(2)).abs() < 1e-9);
        for (k, want) in oracle.iter().enumerate() {
            let got = spec.frames.get(0, k);
            assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0), "bin {k}: {got} vs {want}");
        }
    }

    #[test]
    fn fft_matches_direct_dft_and_parseval() {
        let cfg = WindowConfig::<f64>::new(256, 128, 256, 16_000).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let x: Vec<f64> = (0..256).map(|_| rng.random_range(-1.0..1.0)).collect();
            let frames = Matrix::from_vec(1, 256, x.clone()).unwrap();
            let spec = power_spectrum(&frames, &cfg).unwrap();
            let oracle = dft_energy(&x, 256);
            let scale = oracle.iter().cloned().fold(0.0, f64::max);
            for (k, want) in oracle.iter().enumerate() {
                assert!((spec.frames.get(0, k) - want).abs() <= 1e-9 * scale);
            }
            // Parseval with bins 1..N/2-1 counted twice.
            let row = spec.frames.row(0);
            let total = row[0] + row[128] + 2.0 * row[1..128].iter().sum::<f64>();
            let energy = 256.0 * x.iter().map(|v| v * v).sum::<f64>();
            assert!((total - energy).abs() <= 1e-9 * energy);
        }
    }

    #[test]
    fn generic_over_f32() {
        let cfg = WindowConfig::<f32>::default();
        let s = AudioSignal::new(vec![0.5f32; 320], 16_000);
        let spec = analyze(&s, &cfg, 0.97).unwrap();
        assert_eq!(spec.n_frames(), 9);
        assert_eq!(spec.n_bins(), 129);
        assert_eq!(spec.frame_rate, 800.0);
    }

    proptest! {
        #[test]
        fn frame_count_formula(len in 1usize..5000, window in 2usize..400, hop_frac in 0.01f64..1.0) {
            let hop = ((window as f64 * hop_frac) as usize).max(1);
            let cfg = WindowConfig::<f64>::new(window, hop, window.next_power_of_two(), 16_000).unwrap();
            let s = sig(vec![0.1; len]);
            match frame_and_window(&s, &cfg) {
                Ok(f) => {
                    prop_assert!(len >= window);
                    prop_assert_eq!(f.rows(), (len - window) / hop + 1);
                }
                Err(_) => prop_assert!(len < window),
            }
        }

        #[test]
        fn pre_emphasis_inverts(x in proptest::collection::vec(-1.0f64..1.0, 0..300), alpha in 0.0f64..0.99) {
            let s = sig(x);
            let back = de_emphasize(&pre_emphasize(&s, alpha), alpha);
            for (a, b) in back.samples.iter().zip(&s.samples) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
