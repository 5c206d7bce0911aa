//! Envelope correlation measure (ECM) and auxiliary feature-space distances.
//!
//! ECM low-pass filters each channel's energy trajectory (127-tap Hamming-windowed sinc,
//! 20 Hz cutoff, reflected edges), correlates clean against processed per channel, and
//! averages the squared positive part of the correlations:
//! `ECM = (1/M) * sum_c max(0, rho_c)^2`.
//! A channel that is constant in both inputs counts as `rho = 1`; constant in exactly one
//! counts as `rho = 0`.

use crate::error::{ensure, Error, Result};
use crate::features::CiFeatureSequence;
use crate::scalar::Real;

pub const ENVELOPE_TAPS: usize = 127;
pub const ENVELOPE_CUTOFF_HZ: f64 = 20.0;
pub const MIN_ECM_FRAMES: usize = 32;

#[derive(Clone, Debug, PartialEq)]
pub struct EcmScore<T> {
    pub value: T,
    /// Pearson correlation of the smoothed envelopes, one per channel (before clamping).
    pub per_channel: Vec<T>,
}

/// Linear-phase low-pass FIR, unit DC gain.
pub fn envelope_filter<T: Real>(frame_rate: f64) -> Vec<T> {
    let fc = ENVELOPE_CUTOFF_HZ / frame_rate;
    let mid = (ENVELOPE_TAPS / 2) as f64;
    let pi = std::f64::consts::PI;
    let raw: Vec<f64> = (0..ENVELOPE_TAPS)
        .map(|n| {
            let m = n as f64 - mid;
            let sinc = if m == 0.0 { 2.0 * fc } else { (2.0 * pi * fc * m).sin() / (pi * m) };
            let window = 0.54 - 0.46 * (2.0 * pi * n as f64 / (ENVELOPE_TAPS - 1) as f64).cos();
            sinc * window
        })
        .collect();
    let sum: f64 = raw.iter().sum();
    raw.iter().map(|&h| T::lit(h / sum)).collect()
}

#[inline]
fn reflect(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let mut j = i.rem_euclid(period);
    if j >= len as isize {
        j = period - j;
    }
    j as usize
}

/// Same-length filtering with reflection padding at both ends.
pub fn smooth_envelope<T: Real>(x: &[T], taps: &[T]) -> Vec<T> {
    let half = (taps.len() / 2) as isize;
    (0..x.len() as isize)
        .map(|t| {
            taps.iter()
                .enumerate()
                .map(|(j, &h)| h * x[reflect(t + j as isize - half, x.len())])
                .sum()
        })
        .collect()
}

fn is_constant<T: Real>(x: &[T]) -> bool {
    x.windows(2).all(|w| w[0] == w[1])
}

fn pearson<T: Real>(a: &[T], b: &[T]) -> Option<T> {
    let n = T::from_usize_lossy(a.len());
    let ma = a.iter().copied().sum::<T>() / n;
    let mb = b.iter().copied().sum::<T>() / n;
    let (mut sab, mut saa, mut sbb) = (T::zero(), T::zero(), T::zero());
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= T::zero() || sbb <= T::zero() {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).max(-T::one()).min(T::one()))
}

pub fn ecm<T: Real>(clean: &CiFeatureSequence<T>, processed: &CiFeatureSequence<T>) -> Result<EcmScore<T>> {
    clean.features.ensure_same_shape(&processed.features, "ecm")?;
    ensure!(
        clean.n_frames() >= MIN_ECM_FRAMES,
        Error::InvalidArgument(format!("ECM needs >= {MIN_ECM_FRAMES} frames, got {}", clean.n_frames()))
    );
    ensure!(
        clean.features.is_finite() && processed.features.is_finite(),
        Error::NonFinite("ECM input".into())
    );
    let taps = envelope_filter::<T>(clean.frame_rate);
    let n_ch = clean.n_channels();
    let mut per_channel = Vec::with_capacity(n_ch);
    let mut total = T::zero();
    for c in 0..n_ch {
        let (a, b) = (clean.features.column(c), processed.features.column(c));
        let (sa, sb) = (smooth_envelope(&a, &taps), smooth_envelope(&b, &taps));
        let flat_a = is_constant(&a) || is_constant(&sa);
        let flat_b = is_constant(&b) || is_constant(&sb);
        let rho = match (flat_a, flat_b) {
            (true, true) => T::one(),
            (true, false) | (false, true) => T::zero(),
            (false, false) => pearson(&sa, &sb).unwrap_or(T::zero()),
        };
        let pos = rho.max(T::zero());
        total += pos * pos;
        per_channel.push(rho);
    }
    Ok(EcmScore { value: total / T::from_usize_lossy(n_ch), per_channel })
}

/// Arithmetic mean of per-utterance ECM.
pub fn mean_ecm<T: Real>(pairs: &[(CiFeatureSequence<T>, CiFeatureSequence<T>)]) -> Result<T> {
    ensure!(!pairs.is_empty(), Error::InvalidArgument("mean_ecm of an empty list".into()));
    let mut sum = T::zero();
    for (i, (c, p)) in pairs.iter().enumerate() {
        sum += ecm(c, p).map_err(|e| e.context(format!("pair {i}")))?.value;
    }
    Ok(sum / T::from_usize_lossy(pairs.len()))
}

/// Mean squared difference of `ln(1 + energy)`.
pub fn feature_mse<T: Real>(clean: &CiFeatureSequence<T>, processed: &CiFeatureSequence<T>) -> Result<T> {
    clean.features.ensure_same_shape(&processed.features, "feature_mse")?;
    let n = clean.features.as_slice().len();
    ensure!(n > 0, Error::InvalidArgument("feature_mse of empty sequences".into()));
    let sum: T = clean
        .features
        .as_slice()
        .iter()
        .zip(processed.features.as_slice())
        .map(|(&c, &p)| {
            let d = p.ln_1p() - c.ln_1p();
            d * d
        })
        .sum();
    Ok(sum / T::from_usize_lossy(n))
}
