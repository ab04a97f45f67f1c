//! Signal preprocessing and multi-resolution log-mel features.

mod crop;
mod mel;
mod resample;
mod stft;

pub use crop::{crop_or_pad, CropMode};
pub use mel::{build_mel_filterbank, hz_to_mel, log_mel, mel_to_hz, MelFilterbank};
pub use resample::resample;
pub use stft::{hann_window, stft_power};

use crate::error::{Error, Result};
use crate::nn::Tensor;

pub const CANONICAL_SAMPLE_RATE: u32 = 16_000;
pub const LOG_EPS: f64 = 1e-6;

/// Mono audio buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::config("sample rate must be positive"));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::data("waveform contains non-finite samples"));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0_f64, |m, s| m.max(s.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    Hann,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrogramConfig {
    pub n_fft: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub sample_rate: u32,
    pub f_min: f64,
    pub f_max: f64,
    pub window: Window,
    pub log_eps: f64,
}

impl SpectrogramConfig {
    /// Config at 16 kHz with the full 0..Nyquist band.
    pub fn new(n_fft: usize, hop: usize, n_mels: usize) -> Self {
        Self {
            n_fft,
            hop,
            n_mels,
            sample_rate: CANONICAL_SAMPLE_RATE,
            f_min: 0.0,
            f_max: CANONICAL_SAMPLE_RATE as f64 / 2.0,
            window: Window::Hann,
            log_eps: LOG_EPS,
        }
    }

    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    pub fn n_frames(&self, n_samples: usize) -> usize {
        1 + n_samples / self.hop
    }

    pub fn validate(&self) -> Result<()> {
        let nyquist = self.sample_rate as f64 / 2.0;
        if self.n_fft == 0 || self.hop == 0 || self.hop > self.n_fft {
            return Err(Error::config(format!(
                "need 0 < hop <= n_fft, got hop={} n_fft={}",
                self.hop, self.n_fft
            )));
        }
        if self.n_mels < 2 {
            return Err(Error::config("n_mels must be at least 2"));
        }
        if self.sample_rate == 0 {
            return Err(Error::config("sample rate must be positive"));
        }
        if !(self.f_min >= 0.0 && self.f_min < self.f_max && self.f_max <= nyquist) {
            return Err(Error::config(format!(
                "need 0 <= f_min < f_max <= {nyquist}, got [{}, {}]",
                self.f_min, self.f_max
            )));
        }
        if !(self.log_eps > 0.0) {
            return Err(Error::config("log_eps must be positive"));
        }
        Ok(())
    }
}

/// The three analysis resolutions, ordered fine to coarse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Resolution {
    Fine,
    Medium,
    Coarse,
}

impl Resolution {
    pub const ALL: [Resolution; 3] = [Resolution::Fine, Resolution::Medium, Resolution::Coarse];

    pub fn index(self) -> usize {
        match self {
            Resolution::Fine => 0,
            Resolution::Medium => 1,
            Resolution::Coarse => 2,
        }
    }

    /// Resolution from its 1-based index (1 = fine).
    pub fn from_number(k: usize) -> Result<Self> {
        match k {
            1 => Ok(Resolution::Fine),
            2 => Ok(Resolution::Medium),
            3 => Ok(Resolution::Coarse),
            _ => Err(Error::config(format!("resolution index must be 1, 2 or 3, got {k}"))),
        }
    }

    pub fn number(self) -> usize {
        self.index() + 1
    }

    pub fn name(self) -> &'static str {
        match self {
            Resolution::Fine => "fine",
            Resolution::Medium => "medium",
            Resolution::Coarse => "coarse",
        }
    }

    pub fn config(self) -> SpectrogramConfig {
        match self {
            Resolution::Fine => SpectrogramConfig::new(400, 160, 64),
            Resolution::Medium => SpectrogramConfig::new(1024, 256, 128),
            Resolution::Coarse => SpectrogramConfig::new(2048, 512, 128),
        }
    }
}

/// Log-mel matrix `n_mels x n_frames` for one resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    pub values: Tensor,
    pub config: SpectrogramConfig,
    /// Set when the config is one of the three canonical resolutions.
    pub resolution: Option<Resolution>,
}

impl MelSpectrogram {
    pub fn n_mels(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn n_frames(&self) -> usize {
        self.values.shape()[1]
    }
}

/// Feature extractor with the three canonical filterbanks built once.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    banks: Vec<(Resolution, MelFilterbank)>,
}

impl FeatureExtractor {
    pub fn new() -> Result<Self> {
        let banks = Resolution::ALL
            .iter()
            .map(|&r| Ok((r, build_mel_filterbank(&r.config())?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { banks })
    }

    pub fn extract(&self, w: &Waveform, resolution: Resolution) -> Result<MelSpectrogram> {
        let (_, fb) = &self.banks[resolution.index()];
        let cfg = resolution.config();
        let power = stft_power(w, &cfg)?;
        log_mel(&power, fb, cfg.log_eps)
    }

    pub fn extract_all(&self, w: &Waveform) -> Result<[MelSpectrogram; 3]> {
        if w.sample_rate != CANONICAL_SAMPLE_RATE {
            return Err(Error::ConfigMismatch(format!(
                "features expect {} Hz input, got {} Hz",
                CANONICAL_SAMPLE_RATE, w.sample_rate
            )));
        }
        Ok([
            self.extract(w, Resolution::Fine)?,
            self.extract(w, Resolution::Medium)?,
            self.extract(w, Resolution::Coarse)?,
        ])
    }
}

/// Fine, medium and coarse log-mel spectrograms of a 16 kHz waveform.
pub fn multi_resolution_features(w: &Waveform) -> Result<[MelSpectrogram; 3]> {
    FeatureExtractor::new()?.extract_all(w)
}
