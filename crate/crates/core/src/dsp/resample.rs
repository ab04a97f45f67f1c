use std::f64::consts::PI;

use super::Waveform;
use crate::error::{Error, Result};

/// Sinc zero crossings on each side of the kernel center.
const ZERO_CROSSINGS: usize = 16;
const KAISER_BETA: f64 = 8.0;
/// Cutoff as a fraction of the lower Nyquist frequency.
const ROLLOFF: f64 = 0.94;

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..64 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Rational-ratio resampling with a Kaiser-windowed sinc kernel.
///
/// Each output phase uses its own unit-DC-gain kernel, so constant signals
/// pass unchanged away from the edges. Samples outside the buffer are zero.
pub fn resample(w: &Waveform, target_rate: u32) -> Result<Waveform> {
    if w.is_empty() {
        return Err(Error::EmptySignal);
    }
    if target_rate == 0 {
        return Err(Error::config("target rate must be positive"));
    }
    if target_rate == w.sample_rate {
        return Ok(w.clone());
    }
    let src = w.sample_rate as u64;
    let dst = target_rate as u64;
    let g = gcd(src, dst);
    let up = (dst / g) as usize;
    let down = (src / g) as usize;

    let scale = (dst as f64 / src as f64).min(1.0);
    let cutoff = 0.5 * ROLLOFF * scale;
    // Kernel half-width in input samples.
    let half_width = ZERO_CROSSINGS as f64 / (2.0 * cutoff);
    let taps_per_side = half_width.ceil() as i64;
    let n_taps = (2 * taps_per_side) as usize;
    let i0_beta = bessel_i0(KAISER_BETA);

    // phases[p][t] weights input (base - taps_per_side + 1 + t) for phase p.
    let phases: Vec<Vec<f64>> = (0..up)
        .map(|p| {
            let frac = p as f64 / up as f64;
            let mut taps: Vec<f64> = (0..n_taps)
                .map(|t| {
                    let offset = t as i64 - taps_per_side + 1;
                    let x = offset as f64 - frac;
                    let r = x / half_width;
                    if r.abs() >= 1.0 {
                        return 0.0;
                    }
                    let window = bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / i0_beta;
                    2.0 * cutoff * sinc(2.0 * cutoff * x) * window
                })
                .collect();
            let sum: f64 = taps.iter().sum();
            taps.iter_mut().for_each(|v| *v /= sum);
            taps
        })
        .collect();

    let len = w.len();
    let out_len = ((len as f64) * dst as f64 / src as f64).round() as usize;
    let mut out = Vec::with_capacity(out_len);
    for n in 0..out_len {
        let pos = n * down;
        let base = (pos / up) as i64;
        let taps = &phases[pos % up];
        let start = base - taps_per_side + 1;
        let mut acc = 0.0;
        for (t, &h) in taps.iter().enumerate() {
            let idx = start + t as i64;
            if idx >= 0 && (idx as usize) < len {
                acc += h * w.samples[idx as usize];
            }
        }
        out.push(acc);
    }
    Ok(Waveform { samples: out, sample_rate: target_rate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rustfft::{num_complex::Complex, FftPlanner};

    fn tone(freq: f64, rate: u32, seconds: f64, amp: f64) -> Waveform {
        let n = (seconds * rate as f64) as usize;
        let samples = (0..n)
            .map(|i| amp * (2.0 * PI * freq * i as f64 / rate as f64).sin())
            .collect();
        Waveform::new(samples, rate).unwrap()
    }

    fn spectrum(x: &[f64]) -> Vec<f64> {
        let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
        buf[..x.len() / 2 + 1].iter().map(|c| c.norm_sqr()).collect()
    }

    #[test]
    fn identity_when_rates_match() {
        let w = tone(440.0, 16_000, 0.1, 0.5);
        assert_eq!(resample(&w, 16_000).unwrap(), w);
    }

    #[test]
    fn empty_input_errors() {
        let w = Waveform { samples: vec![], sample_rate: 48_000 };
        assert!(matches!(resample(&w, 16_000), Err(Error::EmptySignal)));
    }

    #[test]
    fn dc_preserved_in_interior() {
        let w = Waveform::new(vec![0.5; 48_000], 48_000).unwrap();
        let out = resample(&w, 16_000).unwrap();
        assert_eq!(out.sample_rate, 16_000);
        assert_eq!(out.len(), 16_000);
        for &s in &out.samples[200..out.len() - 200] {
            assert!((s - 0.5).abs() < 1e-6, "{s}");
        }
    }

    #[test]
    fn duration_preserved_for_odd_ratio() {
        let w = Waveform::new(vec![0.1; 44_101], 44_100).unwrap();
        let out = resample(&w, 16_000).unwrap();
        let expected = 44_101.0 * 16_000.0 / 44_100.0;
        assert!((out.len() as f64 - expected).abs() <= 1.0);
    }

    #[test]
    fn tone_peak_bin_survives_downsampling() {
        let w = tone(1000.0, 48_000, 1.0, 0.8);
        let out = resample(&w, 16_000).unwrap();
        let spec = spectrum(&out.samples);
        let peak = spec
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        let bin_hz = 16_000.0 / out.len() as f64;
        assert!((peak as f64 * bin_hz - 1000.0).abs() <= bin_hz, "peak at bin {peak}");
    }

    #[test]
    fn attenuates_above_new_nyquist() {
        let rate_in = 48_000;
        let passband = tone(1000.0, rate_in, 1.0, 0.5);
        // 1.2x the 8 kHz output Nyquist.
        let alias = tone(9600.0, rate_in, 1.0, 0.5);
        let edge = 400;
        let energy = |w: &Waveform| -> f64 {
            let out = resample(w, 16_000).unwrap();
            out.samples[edge..out.len() - edge].iter().map(|s| s * s).sum()
        };
        let ratio_db = 10.0 * (energy(&alias) / energy(&passband)).log10();
        assert!(ratio_db <= -40.0, "stopband attenuation only {ratio_db:.1} dB");
    }

    #[test]
    fn upsampling_keeps_tone() {
        let w = tone(500.0, 8000, 0.5, 0.5);
        let out = resample(&w, 16_000).unwrap();
        assert_eq!(out.len(), 8000);
        let reference = tone(500.0, 16_000, 0.5, 0.5);
        let err = out.samples[300..7700]
            .iter()
            .zip(&reference.samples[300..7700])
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-3, "max deviation {err}");
    }
}
