use serde::{Deserialize, Serialize};

use super::{stft, Waveform};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// HTK Mel scale.
pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MelConfig {
    pub n_fft: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub log_floor: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self {
            n_fft: 512,
            hop: 128,
            n_mels: 40,
            fmin: 0.0,
            fmax: 8000.0,
            log_floor: 1e-10,
        }
    }
}

impl MelConfig {
    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        let nyquist = f64::from(sample_rate) / 2.0;
        if !(self.fmin >= 0.0 && self.fmin < self.fmax && self.fmax <= nyquist) {
            return Err(Error::invalid(format!(
                "need 0 <= fmin < fmax <= {nyquist}, got fmin={} fmax={}",
                self.fmin, self.fmax
            )));
        }
        if self.n_mels == 0 {
            return Err(Error::invalid("n_mels must be positive"));
        }
        if !(self.log_floor > 0.0) {
            return Err(Error::invalid("log floor must be positive"));
        }
        Ok(())
    }
}

/// Triangular HTK filterbank, `n_mels` rows over `n_fft / 2 + 1` FFT bins,
/// unit peak height. A filter narrower than one FFT bin is given unit weight
/// on the bin nearest its centre so no row is empty.
pub fn mel_filterbank<T: Real>(config: &MelConfig, sample_rate: u32) -> Result<Vec<Vec<T>>> {
    config.validate(sample_rate)?;
    let bins = config.n_fft / 2 + 1;
    let bin_hz = f64::from(sample_rate) / config.n_fft as f64;
    let (mlo, mhi) = (hz_to_mel(config.fmin), hz_to_mel(config.fmax));
    let points: Vec<f64> = (0..config.n_mels + 2)
        .map(|i| mel_to_hz(mlo + (mhi - mlo) * i as f64 / (config.n_mels + 1) as f64))
        .collect();
    let bank = (0..config.n_mels)
        .map(|m| {
            let (lo, centre, hi) = (points[m], points[m + 1], points[m + 2]);
            let mut row: Vec<T> = (0..bins)
                .map(|k| {
                    let f = k as f64 * bin_hz;
                    let w = if f > lo && f <= centre {
                        (f - lo) / (centre - lo)
                    } else if f > centre && f < hi {
                        (hi - f) / (hi - centre)
                    } else {
                        0.0
                    };
                    T::lit(w)
                })
                .collect();
            if row.iter().all(|&w| w == T::zero()) {
                let nearest = ((centre / bin_hz).round() as usize).min(bins - 1);
                row[nearest] = T::one();
            }
            row
        })
        .collect();
    Ok(bank)
}

/// Log-Mel energies stored frame-major: `frames()[t][m]` is Mel bin `m` at
/// frame `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MelSpectrogram<T> {
    frames: Vec<Vec<T>>,
    n_mels: usize,
    config: MelConfig,
}

impl<T: Real> MelSpectrogram<T> {
    /// Wraps precomputed frames; every frame must have `n_mels` finite values.
    pub fn from_frames(frames: Vec<Vec<T>>, config: MelConfig) -> Result<Self> {
        let n_mels = config.n_mels;
        if frames.iter().any(|f| f.len() != n_mels) {
            return Err(Error::shape(format!("every frame must have {n_mels} values")));
        }
        if frames.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("mel spectrogram".into()));
        }
        Ok(Self {
            frames,
            n_mels,
            config,
        })
    }

    pub fn frames(&self) -> &[Vec<T>] {
        &self.frames
    }

    pub fn n_mels(&self) -> usize {
        self.n_mels
    }

    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn config(&self) -> &MelConfig {
        &self.config
    }

    pub fn get(&self, mel: usize, frame: usize) -> T {
        self.frames[frame][mel]
    }

    pub fn log_floor(&self) -> T {
        T::lit(self.config.log_floor.ln())
    }
}

/// Power spectrogram through the Mel filterbank, then natural log with a
/// floor of `ln(log_floor)`.
pub fn mel_spectrogram<T: Real>(w: &Waveform<T>, config: &MelConfig) -> Result<MelSpectrogram<T>> {
    let bank = mel_filterbank::<T>(config, w.sample_rate())?;
    let spec = stft(w, config.n_fft, config.hop)?;
    let floor = T::lit(config.log_floor);
    let frames = spec
        .power_frames()
        .into_iter()
        .map(|power| {
            bank.iter()
                .map(|row| {
                    let e: T = row
                        .iter()
                        .zip(&power)
                        .filter(|(&w, _)| w != T::zero())
                        .map(|(&w, &p)| w * p)
                        .sum();
                    e.max(floor).ln()
                })
                .collect()
        })
        .collect();
    MelSpectrogram::from_frames(frames, *config)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, n: usize) -> Waveform<f64> {
        let x = (0..n)
            .map(|t| 0.5 * (2.0 * std::f64::consts::PI * freq * t as f64 / 16_000.0).sin())
            .collect();
        Waveform::new(x, 16_000).unwrap()
    }

    #[test]
    fn mel_scale_round_trip() {
        for f in [0.0, 100.0, 1000.0, 7999.0] {
            assert!((mel_to_hz(hz_to_mel(f)) - f).abs() < 1e-9);
        }
        assert!((hz_to_mel(1000.0) - 1000.0).abs() < 0.5);
    }

    #[test]
    fn filterbank_rows_positive() {
        let bank = mel_filterbank::<f64>(&MelConfig::default(), 16_000).unwrap();
        assert_eq!(bank.len(), 40);
        for row in &bank {
            assert_eq!(row.len(), 257);
            assert!(row.iter().sum::<f64>() > 0.0);
        }
        let dense = MelConfig { n_mels: 128, ..MelConfig::default() };
        for row in mel_filterbank::<f64>(&dense, 16_000).unwrap() {
            assert!(row.iter().sum::<f64>() > 0.0);
        }
    }

    #[test]
    fn zero_signal_hits_floor() {
        let w = Waveform::new(vec![0.0f64; 4000], 16_000).unwrap();
        let m = mel_spectrogram(&w, &MelConfig::default()).unwrap();
        let floor = 1e-10f64.ln();
        assert!(m.frames().iter().flatten().all(|&v| v == floor));
    }

    #[test]
    fn low_tone_lands_in_low_bins() {
        let m = mel_spectrogram(&tone(300.0, 8000), &MelConfig::default()).unwrap();
        for frame in m.frames() {
            let argmax = (0..40).max_by(|&a, &b| frame[a].total_cmp(&frame[b])).unwrap();
            assert!(argmax < 20, "argmax {argmax}");
        }
    }

    #[test]
    fn invalid_bounds_rejected() {
        let w = tone(300.0, 4000);
        let bad = MelConfig { fmin: 5000.0, fmax: 4000.0, ..MelConfig::default() };
        assert!(mel_spectrogram(&w, &bad).is_err());
        let above_nyquist = MelConfig { fmax: 9000.0, ..MelConfig::default() };
        assert!(mel_spectrogram(&w, &above_nyquist).is_err());
    }

    #[test]
    fn deterministic() {
        let w = tone(1234.0, 6000);
        let a = mel_spectrogram(&w, &MelConfig::default()).unwrap();
        let b = mel_spectrogram(&w, &MelConfig::default()).unwrap();
        assert_eq!(a, b);
    }
}
