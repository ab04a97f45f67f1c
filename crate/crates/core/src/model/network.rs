//! Encoder, cross-resolution fusion and the per-dataset head, with the
//! backward pass written out layer by layer.

use std::hash::{Hash, Hasher};

use super::config::{ModelConfig, Variant};
use super::params::ModelParams;
use crate::dsp::{MelSpectrogram, Resolution};
use crate::error::{Error, Result};
use crate::nn::{
    adaptive_avg_pool_1x1, adaptive_avg_pool_backward, conv2d_backward_with_cols, conv2d_with_cols, max_pool_2x2,
    multi_head_self_attention, relu, relu_backward, AttentionOutput, AttentionWeights, MaxPool, Tensor,
};

/// Intermediates of one encoder pass.
#[derive(Debug, Clone)]
pub(crate) struct EncoderCache {
    input: Tensor,
    act1: Tensor,
    pool1: MaxPool,
    act2: Tensor,
    pool2: MaxPool,
    /// Post-ReLU conv3 activations `[C3, H/4, W/4]`.
    pub(crate) act3: Tensor,
    pool3: MaxPool,
    /// Pooled embedding before modulation.
    pooled: Tensor,
    /// Unfolded conv inputs, reused by the backward pass.
    cols: [Vec<f64>; 3],
}

fn check_dataset(cfg: &ModelConfig, dataset_id: usize) -> Result<()> {
    if dataset_id >= cfg.num_datasets {
        return Err(Error::config(format!(
            "dataset id {dataset_id} out of range for {} heads",
            cfg.num_datasets
        )));
    }
    Ok(())
}

pub(crate) fn encode_cached(
    spec: &Tensor,
    params: &ModelParams,
    cfg: &ModelConfig,
    dataset_id: usize,
) -> Result<(Tensor, EncoderCache)> {
    check_dataset(cfg, dataset_id)?;
    let (h, w) = match *spec.shape() {
        [h, w] => (h, w),
        _ => return Err(Error::shape(format!("spectrogram must be 2-D, got {:?}", spec.shape()))),
    };
    let input = spec.clone().reshape(&[1, h, w])?;
    let (y1, cols1) = conv2d_with_cols(&input, &params.conv1_w, &params.conv1_b)?;
    let act1 = relu(&y1);
    let pool1 = max_pool_2x2(&act1)?;
    let (y2, cols2) = conv2d_with_cols(&pool1.output, &params.conv2_w, &params.conv2_b)?;
    let act2 = relu(&y2);
    let pool2 = max_pool_2x2(&act2)?;
    let (y3, cols3) = conv2d_with_cols(&pool2.output, &params.conv3_w, &params.conv3_b)?;
    let act3 = relu(&y3);
    let pool3 = max_pool_2x2(&act3)?;
    let pooled = adaptive_avg_pool_1x1(&pool3.output)?;
    let z = modulate(&pooled, params, cfg, dataset_id);
    let cols = [cols1, cols2, cols3];
    Ok((z, EncoderCache { input, act1, pool1, act2, pool2, act3, pool3, pooled, cols }))
}

fn modulate(e: &Tensor, params: &ModelParams, cfg: &ModelConfig, dataset_id: usize) -> Tensor {
    if !cfg.modulated() {
        return e.clone();
    }
    let g = params.gamma.row(dataset_id);
    let b = params.beta.row(dataset_id);
    Tensor::vector(e.data().iter().zip(g).zip(b).map(|((e, g), b)| g * e + b).collect())
}

/// Shared-encoder embedding of one spectrogram, modulated by the dataset's
/// scale and shift when there is more than one dataset.
pub fn encode(spec: &MelSpectrogram, params: &ModelParams, cfg: &ModelConfig, dataset_id: usize) -> Result<Tensor> {
    encode_cached(&spec.values, params, cfg, dataset_id).map(|(z, _)| z)
}

impl EncoderCache {
    /// Gradient w.r.t. the post-ReLU conv3 activations given `dL/dz`.
    fn act3_grad(&self, grad_z: &Tensor, params: &ModelParams, cfg: &ModelConfig, dataset_id: usize, grads: Option<&mut ModelParams>) -> Tensor {
        let d = grad_z.len();
        let grad_pooled = if cfg.modulated() {
            let g = params.gamma.row(dataset_id);
            if let Some(grads) = grads {
                let gg = &mut grads.gamma.row_mut(dataset_id)[..d];
                for i in 0..d {
                    gg[i] += grad_z.data()[i] * self.pooled.data()[i];
                }
                grads.beta.row_mut(dataset_id).iter_mut().zip(grad_z.data()).for_each(|(a, b)| *a += b);
            }
            Tensor::vector(grad_z.data().iter().zip(g).map(|(a, b)| a * b).collect())
        } else {
            grad_z.clone()
        };
        let grad_p3 = adaptive_avg_pool_backward(self.pool3.output.shape(), &grad_pooled);
        self.pool3.backward(&grad_p3)
    }

    pub(crate) fn backward(
        &self,
        grad_z: &Tensor,
        params: &ModelParams,
        cfg: &ModelConfig,
        dataset_id: usize,
        grads: &mut ModelParams,
    ) -> Result<()> {
        let g_act3 = self.act3_grad(grad_z, params, cfg, dataset_id, Some(grads));
        let g3 = relu_backward(&self.act3, &g_act3);
        let c3 = conv2d_backward_with_cols(&self.cols[2], self.pool2.output.shape(), &params.conv3_w, &g3, true)?;
        grads.conv3_w.add_assign(&c3.kernel);
        grads.conv3_b.add_assign(&c3.bias);
        let g2 = relu_backward(&self.act2, &self.pool2.backward(&c3.input.expect("requested")));
        let c2 = conv2d_backward_with_cols(&self.cols[1], self.pool1.output.shape(), &params.conv2_w, &g2, true)?;
        grads.conv2_w.add_assign(&c2.kernel);
        grads.conv2_b.add_assign(&c2.bias);
        let g1 = relu_backward(&self.act1, &self.pool1.backward(&c2.input.expect("requested")));
        let c1 = conv2d_backward_with_cols(&self.cols[0], self.input.shape(), &params.conv1_w, &g1, false)?;
        grads.conv1_w.add_assign(&c1.kernel);
        grads.conv1_b.add_assign(&c1.bias);
        Ok(())
    }
}

/// Everything one forward pass produces.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub resolutions: Vec<Resolution>,
    /// Post-modulation embeddings, one row per encoded resolution.
    pub embeddings: Tensor,
    /// Attention output rows; `None` for variants without attention.
    pub attended: Option<Tensor>,
    pub fused: Tensor,
    pub logit: f64,
    /// `[heads, K, K]` when attention ran.
    pub attn_weights: Option<Tensor>,
    pub dataset_id: usize,
    pub(crate) caches: Vec<EncoderCache>,
    pub(crate) attention: Option<AttentionOutput>,
}

impl ForwardTrace {
    /// Post-ReLU conv3 activations for `r`, if that resolution was encoded.
    pub fn conv3_activations(&self, r: Resolution) -> Option<&Tensor> {
        self.resolutions.iter().position(|&x| x == r).map(|i| &self.caches[i].act3)
    }

    pub fn score(&self) -> f64 {
        crate::nn::sigmoid(self.logit)
    }

    /// Fingerprint of the piecewise-linear region: which ReLUs are active
    /// and which input each max pool picked.
    pub(crate) fn region(&self, hasher: &mut impl Hasher) {
        for c in &self.caches {
            for act in [&c.act1, &c.act2, &c.act3] {
                act.data().iter().for_each(|&v| (v > 0.0).hash(hasher));
            }
            for pool in [&c.pool1, &c.pool2, &c.pool3] {
                pool.argmax().hash(hasher);
            }
        }
    }
}

pub(crate) fn attention_weights(params: &ModelParams) -> AttentionWeights<'_> {
    AttentionWeights {
        w_qkv: &params.attn_in_w,
        b_qkv: &params.attn_in_b,
        w_o: &params.attn_out_w,
        b_o: &params.attn_out_b,
    }
}

fn stack(rows: &[Tensor]) -> Tensor {
    let d = rows[0].len();
    let data = rows.iter().flat_map(|r| r.data().iter().copied()).collect();
    Tensor::from_vec(vec![rows.len(), d], data).expect("equal rows")
}

fn mean_rows(m: &Tensor) -> Tensor {
    let (k, d) = (m.shape()[0], m.shape()[1]);
    let mut out = vec![0.0; d];
    for i in 0..k {
        out.iter_mut().zip(m.row(i)).for_each(|(a, b)| *a += b);
    }
    out.iter_mut().for_each(|v| *v /= k as f64);
    Tensor::vector(out)
}

/// Fusion and head on already-computed embeddings.
pub(crate) fn fuse_and_classify(
    embeddings: Tensor,
    params: &ModelParams,
    cfg: &ModelConfig,
    dataset_id: usize,
) -> Result<(Tensor, Option<AttentionOutput>, f64)> {
    check_dataset(cfg, dataset_id)?;
    let (fused, attention) = if cfg.variant.uses_attention() {
        let att = multi_head_self_attention(&embeddings, &attention_weights(params), cfg.heads)?;
        (mean_rows(&att.output), Some(att))
    } else {
        (mean_rows(&embeddings), None)
    };
    let w = params.head_w.row(dataset_id);
    let logit = params.head_b.data()[dataset_id] + w.iter().zip(fused.data()).map(|(a, b)| a * b).sum::<f64>();
    Ok((fused, attention, logit))
}

/// Full forward pass over spectrograms ordered fine, medium, coarse. Variants
/// that use a single resolution read only that entry.
pub fn forward(
    specs: &[MelSpectrogram],
    params: &ModelParams,
    cfg: &ModelConfig,
    dataset_id: usize,
) -> Result<ForwardTrace> {
    let values: Vec<&Tensor> = specs.iter().map(|s| &s.values).collect();
    for (i, s) in specs.iter().enumerate() {
        if let Some(r) = s.resolution {
            if r.index() != i {
                return Err(Error::config(format!(
                    "spectrogram {i} is the {} resolution; expected fine, medium, coarse order",
                    r.name()
                )));
            }
        }
    }
    forward_values(&values, params, cfg, dataset_id)
}

pub(crate) fn forward_values(
    specs: &[&Tensor],
    params: &ModelParams,
    cfg: &ModelConfig,
    dataset_id: usize,
) -> Result<ForwardTrace> {
    cfg.validate()?;
    check_dataset(cfg, dataset_id)?;
    if specs.len() != 3 {
        return Err(Error::config(format!("expected 3 spectrograms, got {}", specs.len())));
    }
    let resolutions = cfg.variant.resolutions();
    let mut rows = Vec::with_capacity(resolutions.len());
    let mut caches = Vec::with_capacity(resolutions.len());
    for r in &resolutions {
        let (z, cache) = encode_cached(specs[r.index()], params, cfg, dataset_id)?;
        rows.push(z);
        caches.push(cache);
    }
    let embeddings = stack(&rows);
    let (fused, attention, logit) = fuse_and_classify(embeddings.clone(), params, cfg, dataset_id)?;
    Ok(ForwardTrace {
        resolutions,
        embeddings,
        attended: attention.as_ref().map(|a| a.output.clone()),
        fused,
        logit,
        attn_weights: attention.as_ref().map(|a| a.weights.clone()),
        dataset_id,
        caches,
        attention,
    })
}

/// Gradient of the logit path w.r.t. the embeddings, accumulating head and
/// attention parameter gradients into `grads` when given.
pub(crate) fn fusion_backward(
    trace: &ForwardTrace,
    grad_logit: f64,
    params: &ModelParams,
    cfg: &ModelConfig,
    grads: Option<&mut ModelParams>,
) -> Tensor {
    let d = trace.fused.len();
    let k = trace.embeddings.shape()[0];
    let ds = trace.dataset_id;
    let w = params.head_w.row(ds);
    let grad_fused: Vec<f64> = w.iter().map(|wi| wi * grad_logit).collect();
    let mut grads = grads;
    if let Some(g) = grads.as_deref_mut() {
        g.head_w.row_mut(ds).iter_mut().zip(trace.fused.data()).for_each(|(a, f)| *a += grad_logit * f);
        g.head_b.data_mut()[ds] += grad_logit;
    }
    let per_row: Vec<f64> = grad_fused.iter().map(|g| g / k as f64).collect();
    let grad_rows = Tensor::from_vec(vec![k, d], per_row.repeat(k)).expect("sized");
    match (&trace.attention, cfg.variant) {
        (Some(att), v) if v.uses_attention() => {
            let ag = att.backward(&attention_weights(params), &grad_rows);
            if let Some(g) = grads {
                g.attn_in_w.add_assign(&ag.w_qkv);
                g.attn_in_b.add_assign(&ag.b_qkv);
                g.attn_out_w.add_assign(&ag.w_o);
                g.attn_out_b.add_assign(&ag.b_o);
            }
            ag.input
        }
        _ => grad_rows,
    }
}

/// Backpropagate `grad_logit` and extra embedding gradients through the
/// whole network.
pub(crate) fn backward(
    trace: &ForwardTrace,
    grad_logit: f64,
    extra_grad_embeddings: Option<&Tensor>,
    params: &ModelParams,
    cfg: &ModelConfig,
    grads: &mut ModelParams,
) -> Result<()> {
    let mut gz = fusion_backward(trace, grad_logit, params, cfg, Some(grads));
    if let Some(extra) = extra_grad_embeddings {
        gz.add_assign(extra);
    }
    for (i, cache) in trace.caches.iter().enumerate() {
        let row = Tensor::vector(gz.row(i).to_vec());
        cache.backward(&row, params, cfg, trace.dataset_id, grads)?;
    }
    Ok(())
}

/// Gradient of the logit w.r.t. one resolution's conv3 activations.
pub(crate) fn logit_grad_wrt_act3(
    trace: &ForwardTrace,
    position: usize,
    params: &ModelParams,
    cfg: &ModelConfig,
) -> Tensor {
    let gz = fusion_backward(trace, 1.0, params, cfg, None);
    let row = Tensor::vector(gz.row(position).to_vec());
    trace.caches[position].act3_grad(&row, params, cfg, trace.dataset_id, None)
}

pub(crate) fn uses(cfg: &ModelConfig, r: Resolution) -> bool {
    match cfg.variant {
        Variant::SingleResolution(k) => k == r,
        _ => true,
    }
}
