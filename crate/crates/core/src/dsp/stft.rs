use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::Waveform;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Periodic Hann window of length `n`.
pub fn hann_window<T: Real>(n: usize) -> Vec<T> {
    let two_pi = T::PI() * T::lit(2.0);
    let n_t = T::from_len(n);
    (0..n)
        .map(|i| T::lit(0.5) - T::lit(0.5) * (two_pi * T::from_len(i) / n_t).cos())
        .collect()
}

/// Complex STFT: `bins = n_fft / 2 + 1` rows, one column per frame.
#[derive(Debug, Clone)]
pub struct Spectrogram<T> {
    pub n_fft: usize,
    pub hop: usize,
    /// `frames[t][k]` is bin `k` of frame `t`.
    pub frames: Vec<Vec<Complex<T>>>,
}

impl<T: Real> Spectrogram<T> {
    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn magnitude(&self, bin: usize, frame: usize) -> T {
        self.frames[frame][bin].norm()
    }

    pub fn power_frames(&self) -> Vec<Vec<T>> {
        self.frames
            .iter()
            .map(|f| f.iter().map(|c| c.norm_sqr()).collect())
            .collect()
    }
}

pub(crate) fn frame_count(len: usize, n_fft: usize, hop: usize) -> usize {
    1 + (len - n_fft) / hop
}

/// Hann-windowed STFT without centering or padding; frame `t` covers samples
/// `[t·hop, t·hop + n_fft)`.
pub fn stft<T: Real>(w: &Waveform<T>, n_fft: usize, hop: usize) -> Result<Spectrogram<T>> {
    if n_fft == 0 || !n_fft.is_power_of_two() {
        return Err(Error::invalid(format!("n_fft {n_fft} is not a power of two")));
    }
    if hop == 0 || hop > n_fft {
        return Err(Error::invalid(format!("hop {hop} must be in 1..={n_fft}")));
    }
    if w.len() < n_fft {
        return Err(Error::invalid(format!(
            "waveform of {} samples shorter than one {n_fft}-sample frame",
            w.len()
        )));
    }
    let fft: Arc<dyn Fft<T>> = FftPlanner::new().plan_fft_forward(n_fft);
    let window = hann_window::<T>(n_fft);
    let n_frames = frame_count(w.len(), n_fft, hop);
    let bins = n_fft / 2 + 1;
    let mut buf = vec![Complex::new(T::zero(), T::zero()); n_fft];
    let mut scratch = vec![Complex::new(T::zero(), T::zero()); fft.get_inplace_scratch_len()];
    let samples = w.samples();
    let frames = (0..n_frames)
        .map(|t| {
            let start = t * hop;
            for (i, c) in buf.iter_mut().enumerate() {
                *c = Complex::new(samples[start + i] * window[i], T::zero());
            }
            fft.process_with_scratch(&mut buf, &mut scratch);
            buf[..bins].to_vec()
        })
        .collect();
    Ok(Spectrogram { n_fft, hop, frames })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_dft_magnitudes(x: &[f64]) -> Vec<f64> {
        let n = x.len();
        let w = hann_window::<f64>(n);
        (0..=n / 2)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (t, &s) in x.iter().enumerate() {
                    let ang = -2.0 * std::f64::consts::PI * (k * t) as f64 / n as f64;
                    re += s * w[t] * ang.cos();
                    im += s * w[t] * ang.sin();
                }
                (re * re + im * im).sqrt()
            })
            .collect()
    }

    #[test]
    fn matches_naive_dft() {
        let x: Vec<f64> = (0..64)
            .map(|i| ((i * 7919) % 97) as f64 / 97.0 - 0.5)
            .collect();
        let w = Waveform::new(x.clone(), 16_000).unwrap();
        let s = stft(&w, 64, 16).unwrap();
        assert_eq!(s.n_frames(), 1);
        let oracle = naive_dft_magnitudes(&x);
        for (k, &m) in oracle.iter().enumerate() {
            assert!((s.magnitude(k, 0) - m).abs() < 1e-8, "bin {k}");
        }
    }

    #[test]
    fn bin_centered_sine_peaks_at_bin() {
        let (rate, n_fft, k) = (16_000u32, 512usize, 37usize);
        let f = k as f64 * rate as f64 / n_fft as f64;
        let x: Vec<f64> = (0..4000)
            .map(|t| (2.0 * std::f64::consts::PI * f * t as f64 / rate as f64).sin())
            .collect();
        let s = stft(&Waveform::new(x, rate).unwrap(), n_fft, 128).unwrap();
        for frame in 0..s.n_frames() {
            let argmax = (0..s.n_bins())
                .max_by(|&a, &b| s.magnitude(a, frame).total_cmp(&s.magnitude(b, frame)))
                .unwrap();
            assert_eq!(argmax, k);
        }
    }

    #[test]
    fn zero_signal_zero_magnitude() {
        let s = stft(&Waveform::new(vec![0.0f64; 1000], 16_000).unwrap(), 256, 64).unwrap();
        assert!(s.frames.iter().flatten().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn frame_count_formula() {
        for (len, n_fft, hop) in [(512, 512, 128), (513, 512, 128), (1000, 256, 100), (2048, 64, 64)] {
            let w = Waveform::new(vec![0.1f64; len], 16_000).unwrap();
            let s = stft(&w, n_fft, hop).unwrap();
            assert_eq!(s.n_frames(), 1 + (len - n_fft) / hop);
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        let w = Waveform::new(vec![0.0f64; 100], 16_000).unwrap();
        assert!(stft(&w, 128, 32).is_err());
        let w = Waveform::new(vec![0.0f64; 1000], 16_000).unwrap();
        assert!(stft(&w, 100, 32).is_err());
        assert!(stft(&w, 128, 129).is_err());
    }
}
