use std::f64::consts::PI;

use rustfft::{num_complex::Complex, FftPlanner};

use super::{SpectrogramConfig, Waveform, Window};
use crate::error::{Error, Result};
use crate::nn::Tensor;

/// Periodic Hann window of length `n`.
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Mirror an out-of-range index back into `0..len` (reflect, edge excluded).
fn reflect(i: i64, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as i64 - 1);
    let m = i.rem_euclid(period);
    if m < len as i64 {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// Power spectrogram `|STFT|^2`, shape `(n_fft/2 + 1) x n_frames`.
///
/// Frames are centered: the signal is reflect-padded by `n_fft/2` on both
/// sides, giving `1 + len/hop` frames.
pub fn stft_power(w: &Waveform, cfg: &SpectrogramConfig) -> Result<Tensor> {
    if w.sample_rate != cfg.sample_rate {
        return Err(Error::ConfigMismatch(format!(
            "waveform at {} Hz, config expects {} Hz",
            w.sample_rate, cfg.sample_rate
        )));
    }
    if w.is_empty() {
        return Err(Error::EmptySignal);
    }
    let window = match cfg.window {
        Window::Hann => hann_window(cfg.n_fft),
    };
    let n_bins = cfg.n_bins();
    let n_frames = cfg.n_frames(w.len());
    let pad = (cfg.n_fft / 2) as i64;
    let fft = FftPlanner::new().plan_fft_forward(cfg.n_fft);
    let mut buf = vec![Complex::new(0.0, 0.0); cfg.n_fft];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut out = Tensor::zeros(&[n_bins, n_frames]);
    let data = out.data_mut();
    for frame in 0..n_frames {
        let start = (frame * cfg.hop) as i64 - pad;
        for (j, slot) in buf.iter_mut().enumerate() {
            let idx = reflect(start + j as i64, w.len());
            *slot = Complex::new(w.samples[idx] * window[j], 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (bin, c) in buf[..n_bins].iter().enumerate() {
            data[bin * n_frames + frame] = c.norm_sqr();
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg_fine() -> SpectrogramConfig {
        SpectrogramConfig::new(400, 160, 64)
    }

    /// Direct O(N^2) DFT of one windowed, reflect-padded frame.
    fn naive_frame_power(x: &[f64], cfg: &SpectrogramConfig, frame: usize) -> Vec<f64> {
        let n = cfg.n_fft;
        let win = hann_window(n);
        let start = (frame * cfg.hop) as i64 - (n / 2) as i64;
        let seg: Vec<f64> = (0..n)
            .map(|j| x[reflect(start + j as i64, x.len())] * win[j])
            .collect();
        (0..=n / 2)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (j, &v) in seg.iter().enumerate() {
                    let ang = -2.0 * PI * (k * j) as f64 / n as f64;
                    re += v * ang.cos();
                    im += v * ang.sin();
                }
                re * re + im * im
            })
            .collect()
    }

    #[test]
    fn reflect_indexing() {
        let got: Vec<usize> = (-3..8).map(|i| reflect(i, 5)).collect();
        assert_eq!(got, vec![3, 2, 1, 0, 1, 2, 3, 4, 3, 2, 1]);
    }

    #[test]
    fn zero_signal_gives_zero_power() {
        let w = Waveform::new(vec![0.0; 32_000], 16_000).unwrap();
        let p = stft_power(&w, &cfg_fine()).unwrap();
        assert_eq!(p.shape(), &[201, 201]);
        assert!(p.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn impulse_energy_equals_windowed_energy() {
        let cfg = cfg_fine();
        let n = cfg.n_fft;
        let mut x = vec![0.0; 4000];
        // Frame 10 is centered on sample 1600.
        x[1600] = 1.0;
        let w = Waveform::new(x.clone(), 16_000).unwrap();
        let p = stft_power(&w, &cfg).unwrap();
        let frames = p.shape()[1];
        let col = |b: usize| p.data()[b * frames + 10];
        // Parseval on the one-sided spectrum of a real frame.
        let parseval = (col(0) + col(n / 2) + 2.0 * (1..n / 2).map(col).sum::<f64>()) / n as f64;
        let win = hann_window(n);
        let start = 1600 - n / 2;
        let direct: f64 = (0..n).map(|j| (win[j] * x[start + j]).powi(2)).sum();
        assert!((parseval - direct).abs() < 1e-12, "{parseval} vs {direct}");
    }

    #[test]
    fn bin_aligned_sinusoid_peaks_at_its_bin() {
        let cfg = cfg_fine();
        let k = 25;
        let freq = k as f64 * 16_000.0 / cfg.n_fft as f64;
        let x: Vec<f64> = (0..8000).map(|i| (2.0 * PI * freq * i as f64 / 16_000.0).sin()).collect();
        let w = Waveform::new(x, 16_000).unwrap();
        let p = stft_power(&w, &cfg).unwrap();
        let frames = p.shape()[1];
        // Frames whose window lies entirely inside the signal.
        let interior = (cfg.n_fft / 2).div_ceil(cfg.hop)..frames - (cfg.n_fft / 2).div_ceil(cfg.hop);
        for f in interior {
            let argmax = (0..cfg.n_bins())
                .max_by(|&a, &b| p.data()[a * frames + f].partial_cmp(&p.data()[b * frames + f]).unwrap())
                .unwrap();
            assert_eq!(argmax, k, "frame {f}");
        }
    }

    #[test]
    fn matches_naive_dft() {
        let cfg = SpectrogramConfig::new(64, 16, 8);
        let x: Vec<f64> = (0..300).map(|i| ((i * 7919) % 113) as f64 / 113.0 - 0.5).collect();
        let w = Waveform::new(x.clone(), 16_000).unwrap();
        let p = stft_power(&w, &cfg).unwrap();
        let frames = p.shape()[1];
        assert_eq!(frames, 1 + 300 / 16);
        for frame in [0, 5, frames - 1] {
            let naive = naive_frame_power(&x, &cfg, frame);
            for (bin, v) in naive.iter().enumerate() {
                assert!((p.data()[bin * frames + frame] - v).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rate_mismatch_errors() {
        let w = Waveform::new(vec![0.0; 100], 8000).unwrap();
        assert!(matches!(stft_power(&w, &cfg_fine()), Err(Error::ConfigMismatch(_))));
    }
}
