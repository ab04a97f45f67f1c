//! Synthetic speech-like corpus: harmonic stacks per speaker, with spoofs
//! carrying vocoder-style artifacts, and a simulated replay channel.

use std::f64::consts::PI;
use std::path::Path;

use biquad::{Biquad, Coefficients, DirectForm2Transposed, Hertz, Type};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{par_map, speaker_disjoint_split, write_manifest, write_wav, ManifestEntry, Split, DEFAULT_RATIOS};
use crate::dsp::Waveform;
use crate::error::{Error, Result};
use crate::rng::{self, SplitMix64};
use crate::Label;

const HARMONICS: usize = 8;
const VIBRATO_HZ: f64 = 5.0;
const VIBRATO_DEPTH: f64 = 0.02;
const NOISE_DB: f64 = -30.0;
const PEAK: f64 = 0.9;
const QUANT_LEVELS: usize = 4;
const FRAME_S: f64 = 0.050;
const REPEAT_S: f64 = 0.010;
pub const RERECORD_PEAK: f64 = PEAK;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_per_class: usize,
    pub seed: u64,
    pub duration_s: f64,
    pub sample_rate: u32,
    pub n_speakers: usize,
    pub rerecord: bool,
    pub dataset_id: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self { n_per_class: 100, seed: 0, duration_s: 2.0, sample_rate: 16_000, n_speakers: 10, rerecord: false, dataset_id: 0 }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_speakers < 3 {
            return Err(Error::config("synthetic corpus needs at least 3 speakers"));
        }
        if self.n_per_class == 0 || !(self.duration_s > 0.0) || self.sample_rate == 0 {
            return Err(Error::config("synthetic corpus needs samples, a positive duration and rate"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    /// Bona fide entries first, then spoofs; splits assigned by speaker.
    pub entries: Vec<ManifestEntry>,
    pub waveforms: Vec<Waveform>,
    /// Base fundamental of each utterance (before vibrato).
    pub f0: Vec<f64>,
}

impl SyntheticCorpus {
    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.entries.len()).filter(|&i| self.entries[i].split == split).collect()
    }
}

fn speaker_f0(seed: u64, speaker: usize) -> f64 {
    rng::stream(seed, rng::purpose::SYNTH | 1 << 36 | speaker as u64).gen_range(100.0..=250.0)
}

fn quantize(amps: &[f64]) -> Vec<f64> {
    let lo = amps.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = amps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let step = (hi - lo) / (QUANT_LEVELS - 1) as f64;
    amps.iter().map(|a| lo + ((a - lo) / step).round() * step).collect()
}

fn add_noise(x: &mut [f64], db: f64, r: &mut SplitMix64) {
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64).sqrt();
    let sigma = rms * 10f64.powf(db / 20.0);
    if sigma > 0.0 {
        let n = Normal::new(0.0, sigma).expect("finite sigma");
        x.iter_mut().for_each(|v| *v += n.sample(r));
    }
}

fn normalize_peak(x: &mut [f64], peak: f64) {
    let m = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if m > 0.0 {
        x.iter_mut().for_each(|v| *v *= peak / m);
    }
}

fn utterance(spec: &SynthSpec, label: Label, index: usize, base_f0: f64) -> (Waveform, f64) {
    let class = label as u64;
    let mut r = rng::stream(spec.seed, rng::purpose::SYNTH | class << 32 | index as u64);
    let sr = spec.sample_rate as f64;
    let n = (spec.duration_s * sr).round() as usize;
    let f0 = base_f0 * r.gen_range(0.97..=1.03);
    let vib_phase = r.gen_range(0.0..2.0 * PI);
    let phases: Vec<f64> = (0..HARMONICS).map(|_| r.gen_range(0.0..2.0 * PI)).collect();
    let mut amps: Vec<f64> = (1..=HARMONICS).map(|h| 1.0 / h as f64).collect();
    if label.is_spoof() {
        amps = quantize(&amps);
    }
    let mut x: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / sr;
            // integral of 2*pi*f0*(1 + depth*sin(2*pi*fv*t + phase))
            let theta = 2.0 * PI * f0 * t - f0 * VIBRATO_DEPTH / VIBRATO_HZ * (2.0 * PI * VIBRATO_HZ * t + vib_phase).cos();
            amps.iter().zip(&phases).enumerate().map(|(h, (a, p))| a * ((h + 1) as f64 * theta + p).sin()).sum()
        })
        .collect();
    if label.is_spoof() {
        let frame = (FRAME_S * sr).round() as usize;
        let rep = (REPEAT_S * sr).round() as usize;
        for start in (0..n).step_by(frame) {
            let end = (start + frame).min(n);
            if end - start < 2 * rep {
                continue;
            }
            let (head, tail) = x.split_at_mut(end - rep);
            tail[..rep].copy_from_slice(&head[start..start + rep]);
        }
    }
    add_noise(&mut x, NOISE_DB, &mut r);
    normalize_peak(&mut x, PEAK);
    (Waveform { samples: x, sample_rate: spec.sample_rate }, f0)
}

/// Balanced corpus; utterance `i` of either class belongs to speaker
/// `i % n_speakers`. Splits are speaker-disjoint (0.6/0.2/0.2).
pub fn generate_synthetic_corpus(spec: &SynthSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let jobs: Vec<(Label, usize)> = [Label::BonaFide, Label::Spoof]
        .into_iter()
        .flat_map(|l| (0..spec.n_per_class).map(move |i| (l, i)))
        .collect();
    let made = par_map(&jobs, |_, &(label, i)| {
        let speaker = i % spec.n_speakers;
        let (mut w, f0) = utterance(spec, label, i, speaker_f0(spec.seed, speaker));
        if spec.rerecord {
            let seed = rng::stream(spec.seed, rng::purpose::RERECORD | (label as u64) << 32 | i as u64).gen();
            w = simulate_rerecord(&w, seed);
        }
        (w, f0)
    });
    let entries: Vec<ManifestEntry> = jobs
        .iter()
        .map(|&(label, i)| ManifestEntry {
            path: format!("{}_{i:05}.wav", if label.is_spoof() { "spoof" } else { "bonafide" }).into(),
            label,
            speaker_id: format!("spk{:03}", i % spec.n_speakers),
            dataset_id: spec.dataset_id,
            split: Split::Train,
        })
        .collect();
    let entries = speaker_disjoint_split(&entries, DEFAULT_RATIOS, spec.seed)?;
    let (waveforms, f0) = made.into_iter().unzip();
    Ok(SyntheticCorpus { entries, waveforms, f0 })
}

/// Write every waveform under `dir` plus `dir/manifest.csv`; returns the
/// manifest path.
pub fn write_corpus(dir: &Path, corpus: &SyntheticCorpus) -> Result<std::path::PathBuf> {
    std::fs::create_dir_all(dir)?;
    let results = par_map(&corpus.entries, |i, e| write_wav(&dir.join(&e.path), &corpus.waveforms[i]));
    results.into_iter().collect::<Result<()>>()?;
    let manifest = dir.join("manifest.csv");
    write_manifest(&manifest, &corpus.entries)?;
    Ok(manifest)
}

fn butterworth_q(order: usize) -> Vec<f64> {
    (1..=order / 2).map(|k| 1.0 / (2.0 * ((2 * k - 1) as f64 * PI / (2 * order) as f64).cos())).collect()
}

/// Random 5-tap minimum-phase FIR (two conjugate zero pairs inside the unit
/// circle), scaled to unit L1 norm so its gain never exceeds 1.
fn random_min_phase(r: &mut SplitMix64) -> [f64; 5] {
    let quad = |r: &mut SplitMix64| {
        let rad: f64 = r.gen_range(0.1..0.5);
        let ang: f64 = r.gen_range(0.0..PI);
        [1.0, -2.0 * rad * ang.cos(), rad * rad]
    };
    let (a, b) = (quad(r), quad(r));
    let mut h = [0.0; 5];
    for i in 0..3 {
        for j in 0..3 {
            h[i + j] += a[i] * b[j];
        }
    }
    let l1: f64 = h.iter().map(|v| v.abs()).sum();
    h.map(|v| v / l1)
}

/// The deterministic part of the replay channel: handset impulse response
/// followed by a 300-3400 Hz band-pass (4th-order Butterworth high-pass,
/// 8th-order low-pass, as biquad sections).
pub fn channel_only(w: &Waveform, seed: u64) -> Waveform {
    let mut r = rng::stream(seed, rng::purpose::RERECORD);
    let h = random_min_phase(&mut r);
    let x = &w.samples;
    let mut y: Vec<f64> =
        (0..x.len()).map(|n| (0..5).filter(|&k| k <= n).map(|k| h[k] * x[n - k]).sum()).collect();
    let fs = Hertz::<f64>::from_hz(w.sample_rate as f64).expect("positive rate");
    let nyq = w.sample_rate as f64 / 2.0;
    let sections = butterworth_q(4)
        .into_iter()
        .map(|q| (Type::HighPass, 300.0f64.min(nyq * 0.9), q))
        .chain(butterworth_q(8).into_iter().map(|q| (Type::LowPass, 3400.0f64.min(nyq * 0.9), q)));
    for (kind, fc, q) in sections {
        let c = Coefficients::<f64>::from_params(kind, fs, Hertz::<f64>::from_hz(fc).expect("positive"), q)
            .expect("cutoff below Nyquist");
        let mut f = DirectForm2Transposed::<f64>::new(c);
        y.iter_mut().for_each(|v| *v = f.run(*v));
    }
    Waveform { samples: y, sample_rate: w.sample_rate }
}

/// Replay/re-record simulation: [`channel_only`], white noise at 20 dB SNR,
/// peak renormalized to 0.9.
pub fn simulate_rerecord(w: &Waveform, seed: u64) -> Waveform {
    let mut y = channel_only(w, seed);
    let mut r = rng::stream(seed, rng::purpose::RERECORD | 1);
    add_noise(&mut y.samples, -20.0, &mut r);
    normalize_peak(&mut y.samples, RERECORD_PEAK);
    y
}

fn spectrum(w: &Waveform) -> Vec<f64> {
    let n = w.len();
    let mut buf: Vec<Complex<f64>> = w.samples.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    buf[..n / 2 + 1].iter().map(|c| c.norm_sqr()).collect()
}

/// Energy of the one-sided DFT power spectrum between `lo` and `hi` Hz.
pub fn band_energy(w: &Waveform, lo: f64, hi: f64) -> f64 {
    if w.is_empty() {
        return 0.0;
    }
    let hz = w.sample_rate as f64 / w.len() as f64;
    spectrum(w).iter().enumerate().filter(|(k, _)| (lo..=hi).contains(&(*k as f64 * hz))).map(|(_, p)| p).sum()
}

/// Fraction of the 0..(H+1)*f0 energy lying in the bands midway between
/// harmonics (`(h+0.3)f0 .. (h+0.7)f0`).
pub fn inter_harmonic_ratio(w: &Waveform, f0: f64) -> f64 {
    let p = spectrum(w);
    let hz = w.sample_rate as f64 / w.len() as f64;
    let mut inter = 0.0;
    let mut total = 0.0;
    for (k, v) in p.iter().enumerate() {
        let f = k as f64 * hz / f0;
        if f > (HARMONICS + 1) as f64 {
            break;
        }
        total += v;
        let frac = f.fract();
        if f >= 1.0 && (0.3..=0.7).contains(&frac) {
            inter += v;
        }
    }
    if total > 0.0 {
        inter / total
    } else {
        0.0
    }
}
