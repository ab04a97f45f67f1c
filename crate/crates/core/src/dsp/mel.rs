use super::{MelSpectrogram, Resolution, SpectrogramConfig};
use crate::error::{Error, Result};
use crate::nn::{matmul, Tensor};

/// HTK mel scale.
pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters with centers equally spaced in mel, no area
/// normalization; each filter peaks at 1 on its center frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    /// `n_mels x (n_fft/2 + 1)`.
    pub weights: Tensor,
    pub center_freqs: Vec<f64>,
    pub config: SpectrogramConfig,
}

impl MelFilterbank {
    pub fn n_mels(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn n_bins(&self) -> usize {
        self.weights.shape()[1]
    }
}

pub fn build_mel_filterbank(cfg: &SpectrogramConfig) -> Result<MelFilterbank> {
    cfg.validate()?;
    let n_bins = cfg.n_bins();
    let mel_lo = hz_to_mel(cfg.f_min);
    let mel_hi = hz_to_mel(cfg.f_max);
    let edges: Vec<f64> = (0..cfg.n_mels + 2)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (cfg.n_mels + 1) as f64))
        .collect();
    let bin_hz = cfg.sample_rate as f64 / cfg.n_fft as f64;
    let mut weights = Tensor::zeros(&[cfg.n_mels, n_bins]);
    for m in 0..cfg.n_mels {
        let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        let row = &mut weights.data_mut()[m * n_bins..(m + 1) * n_bins];
        for (bin, w) in row.iter_mut().enumerate() {
            let f = bin as f64 * bin_hz;
            let rise = (f - lo) / (center - lo);
            let fall = (hi - f) / (hi - center);
            *w = rise.min(fall).max(0.0);
        }
        if !row.iter().any(|&w| w > 0.0) {
            return Err(Error::DegenerateFilterbank { filter: m });
        }
    }
    Ok(MelFilterbank { weights, center_freqs: edges[1..=cfg.n_mels].to_vec(), config: *cfg })
}

/// `ln(F . P + eps)` for a power spectrogram `P` (bins x frames).
pub fn log_mel(power: &Tensor, fb: &MelFilterbank, log_eps: f64) -> Result<MelSpectrogram> {
    if power.ndim() != 2 || power.shape()[0] != fb.n_bins() {
        return Err(Error::ConfigMismatch(format!(
            "power spectrogram {:?} does not match filterbank with {} bins",
            power.shape(),
            fb.n_bins()
        )));
    }
    let mut values = matmul(&fb.weights, power)?;
    values.data_mut().iter_mut().for_each(|v| *v = (*v + log_eps).ln());
    let config = SpectrogramConfig { log_eps, ..fb.config };
    let resolution = Resolution::ALL.into_iter().find(|r| r.config() == config);
    Ok(MelSpectrogram { values, config, resolution })
}
