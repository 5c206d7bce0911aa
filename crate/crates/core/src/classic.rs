//! Classical enhancement baselines on FFT power spectra: noise tracking, power spectral
//! subtraction, decision-directed Wiener filtering and the log-spectral-amplitude MMSE
//! estimator. Gains are applied in the power domain (`G^2 * y`).

use crate::dsp::PowerSpectrogram;
use crate::error::{ensure, Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Real;

pub const NOISE_INIT_SECS: f64 = 0.1;
pub const NOISE_SMOOTHING: f64 = 0.98;
pub const NOISE_GATE: f64 = 1.5;
pub const NOISE_FLOOR_REL: f64 = 1e-12;
pub const DD_SMOOTHING: f64 = 0.98;
/// -25 dB floor on the a-priori SNR.
pub const XI_FLOOR: f64 = 0.003_162_277_660_168_379_5;
pub const MIN_NOISE_FRAMES: usize = 10;
/// Smallest argument handed to E1 by the Log-MMSE gain; keeps the gain finite as `v -> 0`.
pub const E1_MIN_ARG: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseEstimate<T> {
    /// Per-bin noise power.
    pub psd: Vec<T>,
    pub smoothing: f64,
    pub gate: f64,
    pub init_frames: usize,
}

/// Average the leading 100 ms, then track the noise with recursive smoothing on frames whose
/// total power stays below 1.5x the current noise floor.
pub fn estimate_noise<T: Real>(noisy: &PowerSpectrogram<T>) -> Result<NoiseEstimate<T>> {
    let n_frames = noisy.n_frames();
    ensure!(
        n_frames >= MIN_NOISE_FRAMES,
        Error::InvalidArgument(format!("noise estimation needs >= {MIN_NOISE_FRAMES} frames, got {n_frames}"))
    );
    let n_bins = noisy.n_bins();
    let init_frames = ((NOISE_INIT_SECS * noisy.frame_rate).round() as usize).clamp(1, n_frames);

    let mut psd = vec![T::zero(); n_bins];
    for t in 0..init_frames {
        for (p, &y) in psd.iter_mut().zip(noisy.frames.row(t)) {
            *p += y;
        }
    }
    let inv = T::one() / T::from_usize_lossy(init_frames);
    psd.iter_mut().for_each(|p| *p *= inv);

    let (lambda, gate) = (T::lit(NOISE_SMOOTHING), T::lit(NOISE_GATE));
    for t in init_frames..n_frames {
        let row = noisy.frames.row(t);
        let frame_power: T = row.iter().copied().sum();
        let floor_power: T = psd.iter().copied().sum();
        if frame_power < gate * floor_power {
            for (p, &y) in psd.iter_mut().zip(row) {
                *p = lambda * *p + (T::one() - lambda) * y;
            }
        }
    }

    let max_frame = (0..n_frames)
        .map(|t| noisy.frames.row(t).iter().copied().sum::<T>())
        .fold(T::zero(), T::max);
    let floor = (T::lit(NOISE_FLOOR_REL) * max_frame).max(T::min_positive_value());
    psd.iter_mut().for_each(|p| *p = p.max(floor));
    Ok(NoiseEstimate { psd, smoothing: NOISE_SMOOTHING, gate: NOISE_GATE, init_frames })
}

/// Power spectral subtraction of one frame: `max(y - alpha * n, beta * y)`.
pub fn spectral_subtract<T: Real>(noisy_psd: &[T], noise: &NoiseEstimate<T>, alpha: T, beta: T) -> Result<Vec<T>> {
    ensure!(
        noisy_psd.len() == noise.psd.len(),
        Error::Shape(format!("frame has {} bins, noise estimate {}", noisy_psd.len(), noise.psd.len()))
    );
    ensure!(alpha >= T::one(), Error::InvalidArgument(format!("oversubtraction {alpha} < 1")));
    ensure!(
        beta > T::zero() && beta < T::one(),
        Error::InvalidArgument(format!("spectral floor {beta} outside (0, 1)"))
    );
    Ok(noisy_psd.iter().zip(&noise.psd).map(|(&y, &n)| (y - alpha * n).max(beta * y)).collect())
}

/// Spectral subtraction applied to every frame.
pub fn spectral_subtraction<T: Real>(
    noisy: &PowerSpectrogram<T>,
    noise: &NoiseEstimate<T>,
    alpha: T,
    beta: T,
) -> Result<PowerSpectrogram<T>> {
    let mut out = Matrix::zeros(noisy.n_frames(), noisy.n_bins());
    for t in 0..noisy.n_frames() {
        out.row_mut(t).copy_from_slice(&spectral_subtract(noisy.frames.row(t), noise, alpha, beta)?);
    }
    Ok(PowerSpectrogram { frames: out, frame_rate: noisy.frame_rate })
}

#[inline]
pub fn wiener_gain<T: Real>(xi: T) -> T {
    xi / (T::one() + xi)
}

/// Log-spectral-amplitude MMSE gain `xi/(1+xi) * exp(E1(v)/2)`, `v = xi*gamma/(1+xi)`.
pub fn logmmse_gain<T: Real>(xi: T, gamma: T) -> T {
    let w = wiener_gain(xi);
    let v = (w * gamma).as_f64();
    if v.is_nan() || v <= 0.0 {
        return w;
    }
    w * T::lit((0.5 * exp_integral_e1(v.max(E1_MIN_ARG))).exp())
}

/// Exponential integral `E1(x) = integral_x^inf e^-t / t dt` for `x > 0`.
///
/// Power series below 1, modified-Lentz continued fraction above.
pub fn exp_integral_e1(x: f64) -> f64 {
    const EULER: f64 = 0.577_215_664_901_532_9;
    const EPS: f64 = 1e-16;
    const TINY: f64 = 1e-300;
    if x.is_nan() || x <= 0.0 {
        return f64::INFINITY;
    }
    if x < 1.0 {
        let mut sum = 0.0;
        let mut term = 1.0;
        for k in 1..200 {
            term *= -x / k as f64;
            let add = term / k as f64;
            sum += add;
            if add.abs() < EPS * sum.abs().max(EPS) {
                break;
            }
        }
        -EULER - x.ln() - sum
    } else {
        let mut b = x + 1.0;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..10_000 {
            let an = -((i * i) as f64);
            b += 2.0;
            d = 1.0 / (an * d + b);
            c = b + an / c;
            let del = c * d;
            h *= del;
            if (del - 1.0).abs() < EPS {
                break;
            }
        }
        h * (-x).exp()
    }
}

/// Per-frame, per-bin gains produced by a decision-directed estimator.
#[derive(Clone, Debug, PartialEq)]
pub struct GainTrack<T> {
    pub enhanced: PowerSpectrogram<T>,
    /// `T x n_bins` amplitude gains.
    pub gains: Matrix<T>,
}

/// Decision-directed a-priori SNR recursion shared by Wiener-as and Log-MMSE.
///
/// `xi = a * G_prev^2 * gamma_prev + (1 - a) * max(gamma - 1, 0)`, floored at -25 dB, with
/// zero history before the first frame.
pub fn decision_directed<T: Real>(
    noisy: &PowerSpectrogram<T>,
    noise: &NoiseEstimate<T>,
    gain: impl Fn(T, T) -> T,
) -> Result<GainTrack<T>> {
    ensure!(
        noisy.n_bins() == noise.psd.len(),
        Error::Shape(format!("spectrogram has {} bins, noise estimate {}", noisy.n_bins(), noise.psd.len()))
    );
    let (a, xi_min) = (T::lit(DD_SMOOTHING), T::lit(XI_FLOOR));
    let n_bins = noisy.n_bins();
    let mut prev_gain = vec![T::zero(); n_bins];
    let mut prev_gamma = vec![T::zero(); n_bins];
    let mut out = Matrix::zeros(noisy.n_frames(), n_bins);
    let mut gains = Matrix::zeros(noisy.n_frames(), n_bins);
    for t in 0..noisy.n_frames() {
        let row = noisy.frames.row(t);
        for k in 0..n_bins {
            let y = row[k];
            let gamma = y / noise.psd[k];
            let xi = (a * prev_gain[k] * prev_gain[k] * prev_gamma[k]
                + (T::one() - a) * (gamma - T::one()).max(T::zero()))
            .max(xi_min);
            let g = gain(xi, gamma);
            out.set(t, k, g * g * y);
            gains.set(t, k, g);
            prev_gain[k] = g;
            prev_gamma[k] = gamma;
        }
    }
    Ok(GainTrack { enhanced: PowerSpectrogram { frames: out, frame_rate: noisy.frame_rate }, gains })
}

/// Wiener filtering with decision-directed a-priori SNR estimation.
pub fn wiener_as<T: Real>(noisy: &PowerSpectrogram<T>, noise: &NoiseEstimate<T>) -> Result<PowerSpectrogram<T>> {
    Ok(decision_directed(noisy, noise, |xi, _| wiener_gain(xi))?.enhanced)
}

/// Log-MMSE short-time spectral amplitude estimator.
pub fn logmmse<T: Real>(noisy: &PowerSpectrogram<T>, noise: &NoiseEstimate<T>) -> Result<PowerSpectrogram<T>> {
    Ok(decision_directed(noisy, noise, logmmse_gain)?.enhanced)
}
