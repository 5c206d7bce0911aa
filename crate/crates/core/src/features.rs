//! 22-channel CI filterbank features, n-of-m channel selection and electrodograms.
//!
//! Band edges are 23 log-spaced frequencies from 250 Hz to 8 kHz. Channel `i` has a
//! triangular response peaking (weight 1) at the geometric band centre `c_i` and falling
//! to zero at the neighbouring centres `c_{i-1}` and `c_{i+1}`; the outermost feet sit one
//! band ratio beyond the first and last centres. Adjacent triangles sum to one, so every
//! FFT bin inside 250..8000 Hz is covered and no bin feeds more than two channels.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use image::{GrayImage, Luma};

use crate::audio::write_text;
use crate::dsp::PowerSpectrogram;
use crate::error::{ensure, Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Real;

pub const N_CHANNELS: usize = 22;
pub const DEFAULT_N_SELECT: usize = 8;
pub const LOWEST_EDGE_HZ: f64 = 250.0;
pub const HIGHEST_EDGE_HZ: f64 = 8000.0;

#[derive(Clone, Debug, PartialEq)]
pub struct FilterBank<T> {
    /// `22 x n_bins` nonnegative weights.
    pub weights: Matrix<T>,
    pub band_edges: Vec<f64>,
    pub centers: Vec<f64>,
}

impl<T: Real> FilterBank<T> {
    pub fn n_channels(&self) -> usize {
        self.weights.rows()
    }

    pub fn n_bins(&self) -> usize {
        self.weights.cols()
    }
}

pub fn build_filterbank<T: Real>(fft_size: usize, sample_rate: u32) -> Result<FilterBank<T>> {
    ensure!(
        fft_size >= 2 && fft_size.is_power_of_two(),
        Error::InvalidArgument(format!("fft_size {fft_size} is not a power of two"))
    );
    let nyquist = f64::from(sample_rate) / 2.0;
    ensure!(
        nyquist >= HIGHEST_EDGE_HZ,
        Error::InvalidArgument(format!("sample rate {sample_rate} Hz cannot represent 8 kHz"))
    );

    let ratio = (HIGHEST_EDGE_HZ / LOWEST_EDGE_HZ).powf(1.0 / N_CHANNELS as f64);
    let band_edges: Vec<f64> = (0..=N_CHANNELS)
        .map(|i| match i {
            0 => LOWEST_EDGE_HZ,
            N_CHANNELS => HIGHEST_EDGE_HZ,
            _ => LOWEST_EDGE_HZ * ratio.powi(i as i32),
        })
        .collect();
    let centers: Vec<f64> = band_edges.windows(2).map(|e| (e[0] * e[1]).sqrt()).collect();
    let foot_lo = centers[0] / ratio;
    let foot_hi = centers[N_CHANNELS - 1] * ratio;

    let n_bins = fft_size / 2 + 1;
    let bin_hz = f64::from(sample_rate) / fft_size as f64;
    let mut weights = Matrix::zeros(N_CHANNELS, n_bins);
    for ch in 0..N_CHANNELS {
        let lo = if ch == 0 { foot_lo } else { centers[ch - 1] };
        let hi = if ch + 1 == N_CHANNELS { foot_hi } else { centers[ch + 1] };
        let mid = centers[ch];
        let mut covered = 0;
        for bin in 0..n_bins {
            let f = bin as f64 * bin_hz;
            let w = if f > lo && f <= mid {
                (f - lo) / (mid - lo)
            } else if f > mid && f < hi {
                (hi - f) / (hi - mid)
            } else {
                0.0
            };
            if w > 0.0 {
                covered += 1;
                weights.set(ch, bin, T::lit(w));
            }
        }
        ensure!(
            covered > 0,
            Error::InvalidArgument(format!(
                "fft_size {fft_size} leaves channel {} ({:.1}..{:.1} Hz) without any FFT bin",
                ch + 1,
                lo,
                hi
            ))
        );
    }
    Ok(FilterBank { weights, band_edges, centers })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CiFeatureSequence<T> {
    /// `T x 22` nonnegative channel energies.
    pub features: Matrix<T>,
    pub frame_rate: f64,
}

impl<T: Real> CiFeatureSequence<T> {
    pub fn new(features: Matrix<T>, frame_rate: f64) -> Self {
        Self { features, frame_rate }
    }

    pub fn n_frames(&self) -> usize {
        self.features.rows()
    }

    pub fn n_channels(&self) -> usize {
        self.features.cols()
    }

    /// CSV with header `frame,ch1,...,ch22`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = String::from("frame");
        for c in 1..=self.n_channels() {
            let _ = write!(out, ",ch{c}");
        }
        out.push('\n');
        for t in 0..self.n_frames() {
            let _ = write!(out, "{t}");
            for v in self.features.row(t) {
                let _ = write!(out, ",{v:?}");
            }
            out.push('\n');
        }
        write_text(path.as_ref(), &out)
    }

    pub fn read_csv(path: impl AsRef<Path>, frame_rate: f64) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty feature CSV".into()))?;
        let n_channels = header.split(',').count().saturating_sub(1);
        ensure!(n_channels > 0, Error::Parse("feature CSV header has no channels".into()));
        let mut data = Vec::new();
        let mut rows = 0;
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let fields: Vec<&str> = line.split(',').collect();
            ensure!(
                fields.len() == n_channels + 1,
                Error::Parse(format!("{}: row {} has {} fields", path.display(), i + 1, fields.len()))
            );
            for f in &fields[1..] {
                data.push(T::lit(parse_f64(f)?));
            }
            rows += 1;
        }
        Ok(Self::new(Matrix::from_vec(rows, n_channels, data)?, frame_rate))
    }
}

pub(crate) fn parse_f64(s: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("'{s}': {e}")))
}

/// Per-frame weighted sums: `features = spectrogram x weights^T`.
pub fn extract_features<T: Real>(spec: &PowerSpectrogram<T>, fb: &FilterBank<T>) -> Result<CiFeatureSequence<T>> {
    ensure!(
        spec.n_bins() == fb.n_bins(),
        Error::Shape(format!("spectrogram has {} bins, filterbank expects {}", spec.n_bins(), fb.n_bins()))
    );
    let n_ch = fb.n_channels();
    let mut out = Matrix::zeros(spec.n_frames(), n_ch);
    for t in 0..spec.n_frames() {
        let row = spec.frames.row(t);
        for ch in 0..n_ch {
            let acc = fb.weights.row(ch).iter().zip(row).map(|(&w, &p)| w * p).sum();
            out.set(t, ch, acc);
        }
    }
    Ok(CiFeatureSequence::new(out, spec.frame_rate))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Electrodogram<T> {
    /// `T x 22`; unselected channels are exactly zero.
    pub stimulation: Matrix<T>,
}

/// Keep the `n` largest strictly positive channels of every frame (ties go to the lower channel).
pub fn select_n_of_m<T: Real>(feat: &CiFeatureSequence<T>, n: usize) -> Result<Electrodogram<T>> {
    let m = feat.n_channels();
    ensure!(
        (1..=m).contains(&n),
        Error::InvalidArgument(format!("n = {n} must lie in 1..={m}"))
    );
    let mut stim = Matrix::zeros(feat.n_frames(), m);
    let mut order: Vec<usize> = Vec::with_capacity(m);
    for t in 0..feat.n_frames() {
        let row = feat.features.row(t);
        order.clear();
        order.extend((0..m).filter(|&c| row[c] > T::zero()));
        // Stable sort keeps lower channel indices first among equal energies.
        order.sort_by(|&a, &b| row[b].partial_cmp(&row[a]).unwrap_or(std::cmp::Ordering::Equal));
        for &c in order.iter().take(n) {
            stim.set(t, c, row[c]);
        }
    }
    Ok(Electrodogram { stimulation: stim })
}

impl<T: Real> Electrodogram<T> {
    pub fn n_frames(&self) -> usize {
        self.stimulation.rows()
    }

    /// `frame,channel,energy` rows for nonzero entries; channels are 1-indexed.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("frame,channel,energy\n");
        for t in 0..self.stimulation.rows() {
            for (c, v) in self.stimulation.row(t).iter().enumerate() {
                if *v != T::zero() {
                    let _ = writeln!(out, "{t},{},{v:?}", c + 1);
                }
            }
        }
        out
    }

    /// Parse [`Electrodogram::to_csv`] output. Without `n_frames` the length is the last listed frame + 1.
    pub fn from_csv(text: &str, n_frames: Option<usize>, n_channels: usize) -> Result<Self> {
        let mut lines = text.lines();
        ensure!(
            lines.next().map(str::trim) == Some("frame,channel,energy"),
            Error::Parse("missing electrodogram header".into())
        );
        let mut entries = Vec::new();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            ensure!(f.len() == 3, Error::Parse(format!("bad electrodogram row '{line}'")));
            let t: usize = f[0].trim().parse().map_err(|e| Error::Parse(format!("frame '{}': {e}", f[0])))?;
            let c: usize = f[1].trim().parse().map_err(|e| Error::Parse(format!("channel '{}': {e}", f[1])))?;
            ensure!(
                (1..=n_channels).contains(&c),
                Error::Parse(format!("channel {c} outside 1..={n_channels}"))
            );
            entries.push((t, c - 1, T::lit(parse_f64(f[2])?)));
        }
        let inferred = entries.iter().map(|e| e.0 + 1).max().unwrap_or(0);
        let rows = n_frames.unwrap_or(inferred);
        ensure!(inferred <= rows, Error::Parse(format!("frame {} beyond {rows} frames", inferred - 1)));
        let mut stim = Matrix::zeros(rows, n_channels);
        for (t, c, v) in entries {
            stim.set(t, c, v);
        }
        Ok(Self { stimulation: stim })
    }

    /// Time on x, electrode on y (electrode 1 at the bottom), brightness proportional to energy.
    pub fn to_image(&self, row_height: u32) -> GrayImage {
        let (t_len, m) = self.stimulation.shape();
        let peak = self.stimulation.as_slice().iter().fold(0.0f64, |a, v| a.max(v.as_f64()));
        let width = t_len.max(1) as u32;
        let height = (m as u32 * row_height).max(1);
        let mut img = GrayImage::new(width, height);
        for t in 0..t_len {
            for c in 0..m {
                let v = self.stimulation.get(t, c).as_f64();
                let level = if peak > 0.0 { (255.0 * v / peak).round() as u8 } else { 0 };
                let top = (m - 1 - c) as u32 * row_height;
                for dy in 0..row_height {
                    img.put_pixel(t as u32, top + dy, Luma([level]));
                }
            }
        }
        img
    }
}

/// Write `<path>.csv` and `<path>.png` for the electrodogram.
pub fn render_electrodogram<T: Real>(e: &Electrodogram<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let csv_path = path.with_extension("csv");
    write_text(&csv_path, &e.to_csv())?;
    e.to_image(8).save(path.with_extension("png"))?;
    Ok(())
}
