//! Audio loading/storing, SNR mixing and dataset manifests.

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::error::{ensure, Error, Result};
use crate::rng;
use crate::scalar::Real;

pub const PIPELINE_SAMPLE_RATE: u32 = 16_000;

const PCM16_SCALE: f64 = 32768.0;

#[derive(Clone, Debug, PartialEq)]
pub struct AudioSignal<T> {
    pub samples: Vec<T>,
    pub sample_rate: u32,
}

impl<T: Real> AudioSignal<T> {
    pub fn new(samples: Vec<T>, sample_rate: u32) -> Self {
        Self { samples, sample_rate }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Mean-square power over the whole signal.
    pub fn power(&self) -> T {
        mean_square(&self.samples)
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }
}

fn mean_square<T: Real>(x: &[T]) -> T {
    if x.is_empty() {
        return T::zero();
    }
    x.iter().map(|&v| v * v).sum::<T>() / T::from_usize_lossy(x.len())
}

/// Read a mono PCM16 or float32 WAV file at any sample rate.
pub fn read_wav<T: Real>(path: impl AsRef<Path>) -> Result<AudioSignal<T>> {
    let path = path.as_ref();
    let reader = WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::Wav(other),
    })?;
    let spec = reader.spec();
    ensure!(
        spec.channels == 1,
        Error::UnsupportedFormat(format!("{} channels (mono required)", spec.channels))
    );
    let samples = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| T::lit(f64::from(v) / PCM16_SCALE)))
            .collect::<std::result::Result<Vec<_>, _>>()?,
        (SampleFormat::Float, 32) => {
            let mut out = Vec::with_capacity(reader.len() as usize);
            for s in reader.into_samples::<f32>() {
                let v = f64::from(s?);
                ensure!(v.is_finite(), Error::NonFinite(format!("sample in {}", path.display())));
                out.push(T::lit(v));
            }
            out
        }
        (fmt, bits) => {
            return Err(Error::UnsupportedFormat(format!("{fmt:?} with {bits} bits per sample")))
        }
    };
    Ok(AudioSignal::new(samples, spec.sample_rate))
}

/// Read a pipeline input: mono PCM16/float32 at exactly 16 kHz.
pub fn load_wav<T: Real>(path: impl AsRef<Path>) -> Result<AudioSignal<T>> {
    let signal = read_wav(path)?;
    ensure!(
        signal.sample_rate == PIPELINE_SAMPLE_RATE,
        Error::SampleRate { found: signal.sample_rate, expected: PIPELINE_SAMPLE_RATE }
    );
    Ok(signal)
}

/// Write a mono PCM16 WAV. Samples outside [-1, 1] are rejected.
pub fn store_wav<T: Real>(signal: &AudioSignal<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut pcm = Vec::with_capacity(signal.len());
    for (index, &s) in signal.samples.iter().enumerate() {
        let v = s.as_f64();
        ensure!(v.is_finite(), Error::NonFinite(format!("sample {index}")));
        ensure!((-1.0..=1.0).contains(&v), Error::Clipping { index, value: v });
        pcm.push((v * PCM16_SCALE).round().clamp(-32768.0, 32767.0) as i16);
    }
    let spec = WavSpec {
        channels: 1,
        sample_rate: signal.sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut writer = WavWriter::create(path, spec).map_err(|e| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::Wav(other),
    })?;
    for v in pcm {
        writer.write_sample(v)?;
    }
    writer.finalize()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoisyMixture<T> {
    pub clean: AudioSignal<T>,
    pub noise_scaled: AudioSignal<T>,
    pub mixture: AudioSignal<T>,
    pub target_snr_db: f64,
    pub noise_offset: usize,
    pub noise_gain: T,
}

impl<T: Real> NoisyMixture<T> {
    /// SNR recomputed from the stored clean and scaled-noise signals.
    pub fn realized_snr_db(&self) -> f64 {
        10.0 * (self.clean.power().as_f64() / self.noise_scaled.power().as_f64()).log10()
    }
}

/// Add `noise` to `speech` at exactly `snr_db` (full-utterance mean-square power).
///
/// The noise is read cyclically from a seed-derived start offset until it covers the speech.
pub fn mix_at_snr<T: Real>(
    speech: &AudioSignal<T>,
    noise: &AudioSignal<T>,
    snr_db: f64,
    seed: u64,
) -> Result<NoisyMixture<T>> {
    ensure!(
        speech.sample_rate == noise.sample_rate,
        Error::SampleRate { found: noise.sample_rate, expected: speech.sample_rate }
    );
    ensure!(!speech.is_empty(), Error::InvalidArgument("empty speech signal".into()));
    ensure!(!noise.is_empty(), Error::InvalidArgument("empty noise signal".into()));
    ensure!(snr_db.is_finite(), Error::InvalidArgument(format!("snr_db = {snr_db}")));

    let mut rng = rng::stream(seed, "mix-offset", 0);
    let noise_offset = rng.random_range(0..noise.len());
    let tiled: Vec<T> = (0..speech.len())
        .map(|n| noise.samples[(noise_offset + n) % noise.len()])
        .collect();

    let p_speech = speech.power().as_f64();
    let p_noise = mean_square(&tiled).as_f64();
    ensure!(p_speech > 0.0, Error::InvalidArgument("speech has zero power".into()));
    ensure!(p_noise > 0.0, Error::InvalidArgument("noise segment has zero power".into()));

    let gain = T::lit((p_speech / (p_noise * 10f64.powf(snr_db / 10.0))).sqrt());
    let scaled: Vec<T> = tiled.iter().map(|&v| v * gain).collect();
    let mixed: Vec<T> = speech.samples.iter().zip(&scaled).map(|(&s, &n)| s + n).collect();
    let rate = speech.sample_rate;
    Ok(NoisyMixture {
        clean: speech.clone(),
        noise_scaled: AudioSignal::new(scaled, rate),
        mixture: AudioSignal::new(mixed, rate),
        target_snr_db: snr_db,
        noise_offset,
        noise_gain: gain,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(Error::Parse(format!("unknown split '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub id: String,
    pub path: PathBuf,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub seed: u64,
}

impl DatasetManifest {
    pub fn split(&self, which: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == which)
    }

    pub fn count(&self, which: Split) -> usize {
        self.split(which).count()
    }

    /// Tab-separated `id<TAB>path<TAB>split`, one entry per line.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&format!("{}\t{}\t{}\n", e.id, e.path.display(), e.split));
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>, seed: u64) -> Result<Self> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut entries = Vec::new();
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            ensure!(
                fields.len() == 3,
                Error::Parse(format!("{}:{}: expected 3 tab-separated fields", path.display(), lineno + 1))
            );
            entries.push(ManifestEntry {
                id: fields[0].to_string(),
                path: PathBuf::from(fields[1]),
                split: fields[2].parse()?,
            });
        }
        Ok(Self { entries, seed })
    }
}

/// Seeded shuffle followed by a contiguous train/dev/test partition.
///
/// Dev and test sizes are `floor(n * ratio)`; the remainder goes to train.
/// Entries keep their input order in the returned manifest.
pub fn split_manifest(
    entries: &[(String, PathBuf)],
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<DatasetManifest> {
    let (r_train, r_dev, r_test) = ratios;
    ensure!(
        r_train > 0.0 && r_dev > 0.0 && r_test > 0.0,
        Error::InvalidArgument(format!("split ratios must be positive: {ratios:?}"))
    );
    ensure!(
        (r_train + r_dev + r_test - 1.0).abs() <= 1e-9,
        Error::InvalidArgument(format!("split ratios must sum to 1: {ratios:?}"))
    );
    let n = entries.len();
    ensure!(n >= 3, Error::InvalidArgument(format!("need at least 3 entries, got {n}")));

    // Guard against products like 3 * (1/3) landing just below an integer.
    let count = |r: f64| ((n as f64) * r + 1e-9).floor() as usize;
    let n_dev = count(r_dev);
    let n_test = count(r_test);
    let n_train = n - n_dev - n_test;

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, "split", 0));
    let mut labels = vec![Split::Train; n];
    for (rank, &idx) in order.iter().enumerate() {
        labels[idx] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_dev {
            Split::Dev
        } else {
            Split::Test
        };
    }
    let entries = entries
        .iter()
        .zip(labels)
        .map(|((id, path), split)| ManifestEntry { id: id.clone(), path: path.clone(), split })
        .collect();
    Ok(DatasetManifest { entries, seed })
}

/// Utterance ids (file stems) and paths of the `.wav` files in `dir`, sorted by name.
pub fn scan_wav_dir(dir: impl AsRef<Path>) -> Result<Vec<(String, PathBuf)>> {
    let dir = dir.as_ref();
    let mut found = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()).map(|e| e.eq_ignore_ascii_case("wav")) == Some(true) {
            let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            found.push((id, path));
        }
    }
    found.sort();
    Ok(found)
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}
