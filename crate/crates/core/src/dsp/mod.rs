//! Waveforms, time-span extraction, STFT and log-Mel spectrograms.

mod mel;
mod stft;
mod wav;

pub use mel::{hz_to_mel, mel_filterbank, mel_spectrogram, mel_to_hz, MelConfig, MelSpectrogram};
pub use stft::{hann_window, stft, Spectrogram};
pub use wav::{read_wav, write_wav};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

/// Mono audio with samples nominally in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform<T> {
    samples: Vec<T>,
    sample_rate: u32,
}

impl<T: Real> Waveform<T> {
    pub fn new(samples: Vec<T>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("waveform samples".into()));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<T> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    pub fn scaled(&self, gain: T) -> Self {
        Self {
            samples: self.samples.iter().map(|&s| s * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }
}

/// Half-open interval `[start, end)` in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeSpan {
    pub start: f64,
    pub end: f64,
}

impl TimeSpan {
    pub fn new(start: f64, end: f64) -> Result<Self> {
        if !(start >= 0.0 && start < end) || !end.is_finite() {
            return Err(Error::invalid(format!("bad time span [{start}, {end})")));
        }
        Ok(Self { start, end })
    }

    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

fn to_sample_index(seconds: f64, rate: u32) -> usize {
    (seconds * f64::from(rate)).round() as usize
}

/// Samples covering `span`; boundaries round to the nearest sample, so
/// adjacent spans tile without gaps or overlap.
pub fn extract_span<T: Real>(w: &Waveform<T>, span: TimeSpan) -> Result<Waveform<T>> {
    let start = to_sample_index(span.start, w.sample_rate);
    let end = to_sample_index(span.end, w.sample_rate);
    if end > w.len() || start >= end {
        return Err(Error::invalid(format!(
            "span [{}, {}) outside waveform of {:.4} s",
            span.start,
            span.end,
            w.duration()
        )));
    }
    Waveform::new(w.samples[start..end].to_vec(), w.sample_rate)
}
