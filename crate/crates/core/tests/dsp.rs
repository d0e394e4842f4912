use std::f64::consts::PI;

use pronlearn::dsp::{
    extract_span, hann_window, mel_filterbank, mel_spectrogram, read_wav, stft, write_wav, MelConfig, TimeSpan, Waveform,
};
use pronlearn::rng;
use proptest::prelude::*;
use rand::Rng;

fn noise(n: usize, seed: u64) -> Waveform<f64> {
    let mut r = rng::rng(seed);
    Waveform::new((0..n).map(|_| r.gen_range(-0.5..0.5)).collect(), 16_000).unwrap()
}

/// Direct O(n²) DFT magnitude of one Hann-windowed frame.
fn naive_magnitudes(frame: &[f64]) -> Vec<f64> {
    let n = frame.len();
    let w: Vec<f64> = (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect();
    (0..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, (&x, &wt)) in frame.iter().zip(&w).enumerate() {
                let ang = -2.0 * PI * (k * t) as f64 / n as f64;
                re += x * wt * ang.cos();
                im += x * wt * ang.sin();
            }
            re.hypot(im)
        })
        .collect()
}

#[test]
fn stft_matches_direct_dft() {
    let w = noise(1000, 3);
    let (n_fft, hop) = (64, 40);
    let spec = stft(&w, n_fft, hop).unwrap();
    for t in 0..spec.n_frames() {
        let oracle = naive_magnitudes(&w.samples()[t * hop..t * hop + n_fft]);
        for (k, m) in oracle.iter().enumerate() {
            assert!((spec.magnitude(k, t) - m).abs() < 1e-9, "frame {t} bin {k}");
        }
    }
}

#[test]
fn hann_window_is_periodic() {
    let w: Vec<f64> = hann_window(8);
    assert_eq!(w[0], 0.0);
    assert!((w[4] - 1.0).abs() < 1e-15);
    assert!((w[2] - 0.5).abs() < 1e-15);
    assert!((w[1] - w[7]).abs() < 1e-15);
}

#[test]
fn frame_count_formula() {
    for len in [512, 513, 640, 1000, 4096, 5000] {
        for n_fft in [64, 128, 512] {
            for hop in [1, 7, 32, 64] {
                if hop > n_fft || len < n_fft {
                    continue;
                }
                let spec = stft(&noise(len, 1), n_fft, hop).unwrap();
                assert_eq!(spec.n_frames(), 1 + (len - n_fft) / hop, "len {len} n_fft {n_fft} hop {hop}");
                assert_eq!(spec.n_bins(), n_fft / 2 + 1);
            }
        }
    }
}

#[test]
fn bad_stft_arguments() {
    let w = noise(100, 1);
    assert!(stft(&w, 100, 10).is_err());
    assert!(stft(&w, 64, 0).is_err());
    assert!(stft(&w, 64, 65).is_err());
    assert!(stft(&w, 128, 32).is_err());
}

#[test]
fn sine_energy_lands_in_its_mel_band() {
    let sr = 16_000;
    let f = 1000.0;
    let samples = (0..8000).map(|i| (2.0 * PI * f * i as f64 / f64::from(sr)).sin()).collect();
    let w = Waveform::new(samples, sr).unwrap();
    let config = MelConfig::default();
    let mel = mel_spectrogram(&w, &config).unwrap();
    let bank: Vec<Vec<f64>> = mel_filterbank(&config, sr).unwrap();
    let bin = (f * config.n_fft as f64 / f64::from(sr)).round() as usize;
    let expected = (0..config.n_mels)
        .max_by(|&a, &b| bank[a][bin].total_cmp(&bank[b][bin]))
        .unwrap();
    let frame = &mel.frames()[mel.n_frames() / 2];
    let loudest = (0..config.n_mels).max_by(|&a, &b| frame[a].total_cmp(&frame[b])).unwrap();
    assert_eq!(loudest, expected);
}

#[test]
fn silence_sits_at_the_log_floor() {
    let w = Waveform::new(vec![0.0; 2048], 16_000).unwrap();
    let config = MelConfig::default();
    let mel = mel_spectrogram(&w, &config).unwrap();
    let floor = config.log_floor.ln();
    assert!(mel.frames().iter().flatten().all(|&v| v == floor));
}

#[test]
fn filterbank_rows_have_unit_peaks() {
    let bank: Vec<Vec<f64>> = mel_filterbank(&MelConfig::default(), 16_000).unwrap();
    assert_eq!(bank.len(), 40);
    for row in &bank {
        assert_eq!(row.len(), 257);
        let peak = row.iter().copied().fold(0.0, f64::max);
        assert!(peak > 0.0 && peak <= 1.0 + 1e-12);
    }
}

#[test]
fn mel_spectrogram_is_deterministic() {
    let w = noise(6000, 9);
    let config = MelConfig::default();
    let a = mel_spectrogram(&w, &config).unwrap();
    let b = mel_spectrogram(&w, &config).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.n_frames(), 1 + (6000 - 512) / 128);
}

#[test]
fn single_precision_agrees_with_double() {
    let w = noise(4000, 5);
    let w32 = Waveform::new(w.samples().iter().map(|&s| s as f32).collect(), 16_000).unwrap();
    let config = MelConfig::default();
    let a = mel_spectrogram(&w, &config).unwrap();
    let b = mel_spectrogram(&w32, &config).unwrap();
    for (fa, fb) in a.frames().iter().zip(b.frames()) {
        for (x, y) in fa.iter().zip(fb) {
            assert!((x - f64::from(*y)).abs() < 1e-2, "{x} vs {y}");
        }
    }
}

#[test]
fn wav_round_trip_quantizes_to_16_bits() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.wav");
    let w = noise(1234, 4);
    write_wav(&path, &w).unwrap();
    let back: Waveform<f64> = read_wav(&path).unwrap();
    assert_eq!(back.sample_rate(), 16_000);
    assert_eq!(back.len(), w.len());
    for (a, b) in w.samples().iter().zip(back.samples()) {
        assert!((a - b).abs() <= 0.5 / 32768.0 + 1e-12);
    }
}

#[test]
fn spans_tile_without_gaps() {
    let w = noise(16_000, 2);
    let a = extract_span(&w, TimeSpan::new(0.0, 0.3).unwrap()).unwrap();
    let b = extract_span(&w, TimeSpan::new(0.3, 1.0).unwrap()).unwrap();
    assert_eq!(a.len() + b.len(), w.len());
    assert_eq!([a.samples(), b.samples()].concat(), w.samples());
    assert!(extract_span(&w, TimeSpan::new(0.5, 1.5).unwrap()).is_err());
    assert!(TimeSpan::new(0.4, 0.4).is_err());
}

proptest! {
    #[test]
    fn stft_magnitude_is_linear(gain in -4.0f64..4.0, seed in 0u64..1000) {
        let w = noise(700, seed);
        let base = stft(&w, 128, 64).unwrap();
        let scaled = stft(&w.scaled(gain), 128, 64).unwrap();
        for t in 0..base.n_frames() {
            for k in 0..base.n_bins() {
                prop_assert!((scaled.magnitude(k, t) - gain.abs() * base.magnitude(k, t)).abs() < 1e-9);
            }
        }
    }
}
