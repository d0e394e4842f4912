//! Detection of TTS named-entity mispronunciations in phoneme space and
//! audio space, with learned DTW distances, threshold calibration and
//! engagement-gated per-user correction.

pub mod calibration;
pub mod correction;
pub mod datagen;
pub mod dsp;
pub mod dtw;
pub mod dtw_siamese;
pub mod embeddings;
pub mod error;
pub mod gbdt;
pub mod linalg;
pub mod mel_siamese;
pub mod metric;
pub mod nn;
pub mod phoneme;
pub mod rng;
pub mod scalar;
pub mod verdict;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Matrix = linalg::Matrix<f64>;
pub type Waveform = dsp::Waveform<f64>;
pub type MelSpectrogram = dsp::MelSpectrogram<f64>;
pub type Metric = metric::MahalanobisMetric<f64>;

pub type Matrix32 = linalg::Matrix<f32>;
pub type Waveform32 = dsp::Waveform<f32>;
pub type MelSpectrogram32 = dsp::MelSpectrogram<f32>;
pub type Metric32 = metric::MahalanobisMetric<f32>;
