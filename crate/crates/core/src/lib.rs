//! Speech enhancement in cochlear-implant (CI) filterbank feature space.
//!
//! The pipeline turns 16 kHz audio into 22-channel CI features (pre-emphasis, 10 ms Hamming
//! frames every 1.25 ms, 256-point FFT power, triangular filterbank), denoises the features
//! with small 1-D convolutional networks or classical spectral baselines, and scores the
//! result with an envelope-correlation intelligibility measure.
//!
//! Numeric code is generic over [`Real`] (`f32`/`f64`); the aliases below fix `f64`, which
//! is what training and the experiment harness use.

pub mod audio;
pub mod classic;
pub mod dsp;
pub mod error;
pub mod features;
pub mod harness;
pub mod matrix;
pub mod metrics;
pub mod models;
pub mod neural;
pub mod rng;
pub mod scalar;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use scalar::Real;

pub type AudioSignal = audio::AudioSignal<f64>;
pub type NoisyMixture = audio::NoisyMixture<f64>;
pub type WindowConfig = dsp::WindowConfig<f64>;
pub type PowerSpectrogram = dsp::PowerSpectrogram<f64>;
pub type FilterBank = features::FilterBank<f64>;
pub type CiFeatureSequence = features::CiFeatureSequence<f64>;
pub type Electrodogram = features::Electrodogram<f64>;
pub type Tensor = neural::Tensor<f64>;
pub type ConvLayer = neural::ConvLayer<f64>;
pub type Network = neural::Network<f64>;
pub type AdamState = neural::AdamState<f64>;
pub type NormStats = models::NormStats<f64>;

pub type NoiseEstimate = classic::NoiseEstimate<f64>;
pub type EcmScore = metrics::EcmScore<f64>;
