use super::config::ModelConfig;
use super::network::{forward, logit_grad_wrt_act3, uses};
use super::params::ModelParams;
use crate::dsp::{MelSpectrogram, Resolution};
use crate::error::{Error, Result};
use crate::nn::Tensor;

/// Grad-CAM map over the conv3 grid of one resolution, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub resolution: Resolution,
    /// `[H/4, W/4]` of the input spectrogram.
    pub values: Tensor,
}

impl Heatmap {
    pub fn height(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.values.shape()[1]
    }
}

/// Channel weights are the spatial means of `dlogit/dA_c`; the map is
/// `ReLU(sum_c w_c A_c)` rescaled to `[0, 1]`. A constant map becomes all
/// zeros. Resolutions the variant never encodes have no gradient path and
/// yield a zero map.
pub fn grad_cam(
    specs: &[MelSpectrogram],
    params: &ModelParams,
    cfg: &ModelConfig,
    dataset_id: usize,
    resolution_index: usize,
) -> Result<Heatmap> {
    let resolution = Resolution::from_number(resolution_index)?;
    let spec = specs
        .get(resolution.index())
        .ok_or_else(|| Error::config(format!("no spectrogram for resolution {resolution_index}")))?;
    let (h3, w3) = (spec.n_mels() / 4, spec.n_frames() / 4);
    if !uses(cfg, resolution) {
        return Ok(Heatmap { resolution, values: Tensor::zeros(&[h3, w3]) });
    }
    let trace = forward(specs, params, cfg, dataset_id)?;
    let position = trace.resolutions.iter().position(|&r| r == resolution).expect("encoded");
    let act = trace.conv3_activations(resolution).expect("encoded");
    let grad = logit_grad_wrt_act3(&trace, position, params, cfg);
    let (c, h, w) = (act.shape()[0], act.shape()[1], act.shape()[2]);
    let hw = h * w;
    let mut cam = vec![0.0; hw];
    for ch in 0..c {
        let g = &grad.data()[ch * hw..(ch + 1) * hw];
        let weight = g.iter().sum::<f64>() / hw as f64;
        if weight == 0.0 {
            continue;
        }
        let a = &act.data()[ch * hw..(ch + 1) * hw];
        cam.iter_mut().zip(a).for_each(|(m, v)| *m += weight * v);
    }
    cam.iter_mut().for_each(|v| *v = v.max(0.0));
    let lo = cam.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = cam.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hw > 0 && hi > lo {
        cam.iter_mut().for_each(|v| *v = (*v - lo) / (hi - lo));
    } else {
        cam.fill(0.0);
    }
    Ok(Heatmap { resolution, values: Tensor::from_vec(vec![h, w], cam)? })
}
