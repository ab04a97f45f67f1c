use std::collections::hash_map::DefaultHasher;
use std::hash::Hasher;

use super::config::ModelConfig;
use super::network::{backward, forward_values, ForwardTrace};
use super::params::ModelParams;
use crate::dsp::MelSpectrogram;
use crate::error::{Error, Result};
use crate::nn::{bce_with_logit, bce_with_logit_grad, l2_normalize, l2_normalize_backward, Tensor};
use crate::Label;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub total: f64,
    pub cls: f64,
    pub cons: f64,
    pub lambda: f64,
}

impl LossBreakdown {
    pub fn new(cls: f64, cons: f64, lambda: f64) -> Self {
        Self { total: cls + lambda * cons, cls, cons, lambda }
    }
}

/// `sum_{i<j} |z_i/|z_i| - z_j/|z_j||^2` over the rows of one sample.
pub fn sample_consistency(embeddings: &Tensor) -> f64 {
    let k = embeddings.shape()[0];
    let normed: Vec<Tensor> = (0..k).map(|i| l2_normalize(&Tensor::vector(embeddings.row(i).to_vec()))).collect();
    let mut total = 0.0;
    for i in 0..k {
        for j in i + 1..k {
            total += normed[i].data().iter().zip(normed[j].data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
    }
    total
}

pub(crate) fn sample_consistency_grad(embeddings: &Tensor) -> Tensor {
    let (k, d) = (embeddings.shape()[0], embeddings.shape()[1]);
    let rows: Vec<Tensor> = (0..k).map(|i| Tensor::vector(embeddings.row(i).to_vec())).collect();
    let normed: Vec<Tensor> = rows.iter().map(l2_normalize).collect();
    let mut sum = vec![0.0; d];
    for n in &normed {
        sum.iter_mut().zip(n.data()).for_each(|(s, v)| *s += v);
    }
    let mut out = Vec::with_capacity(k * d);
    for (z, n) in rows.iter().zip(&normed) {
        let g_hat = Tensor::vector(n.data().iter().zip(&sum).map(|(v, s)| 2.0 * (k as f64 * v - s)).collect());
        out.extend_from_slice(l2_normalize_backward(z, &g_hat).data());
    }
    Tensor::from_vec(vec![k, d], out).expect("sized")
}

/// Mean consistency over the bona fide samples; 0 when there are none.
pub fn consistency_loss(traces: &[ForwardTrace], labels: &[Label]) -> f64 {
    let bona: Vec<f64> = traces
        .iter()
        .zip(labels)
        .filter(|(_, l)| **l == Label::BonaFide)
        .map(|(t, _)| sample_consistency(&t.embeddings))
        .collect();
    if bona.is_empty() {
        0.0
    } else {
        bona.iter().sum::<f64>() / bona.len() as f64
    }
}

pub fn classification_loss(traces: &[ForwardTrace], labels: &[Label]) -> f64 {
    if traces.is_empty() {
        return 0.0;
    }
    traces.iter().zip(labels).map(|(t, l)| bce_with_logit(t.logit, l.as_f64())).sum::<f64>() / traces.len() as f64
}

/// Mean BCE plus the weighted consistency term.
pub fn total_loss(traces: &[ForwardTrace], labels: &[Label], cfg: &ModelConfig) -> LossBreakdown {
    LossBreakdown::new(classification_loss(traces, labels), consistency_loss(traces, labels), cfg.effective_lambda())
}

/// One labelled input: spectrograms ordered fine, medium, coarse.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a> {
    pub specs: &'a [MelSpectrogram],
    pub label: Label,
    pub dataset_id: usize,
}

/// Loss of a mini-batch and its gradient w.r.t. every parameter.
///
/// Samples are processed one at a time; each contributes `bce/B` and, when
/// bona fide, `lambda * consistency / n_bona`.
pub fn loss_and_gradients(
    batch: &[Example<'_>],
    params: &ModelParams,
    cfg: &ModelConfig,
) -> Result<(LossBreakdown, ModelParams)> {
    if batch.is_empty() {
        return Err(Error::data("empty batch"));
    }
    let lambda = cfg.effective_lambda();
    let n = batch.len() as f64;
    let n_bona = batch.iter().filter(|e| e.label == Label::BonaFide).count();
    let mut grads = params.zeros_like();
    let mut cls = 0.0;
    let mut cons = 0.0;
    for ex in batch {
        let specs: Vec<&Tensor> = ex.specs.iter().map(|s| &s.values).collect();
        let trace = forward_values(&specs, params, cfg, ex.dataset_id)?;
        let y = ex.label.as_f64();
        cls += bce_with_logit(trace.logit, y);
        let grad_logit = bce_with_logit_grad(trace.logit, y) / n;
        let extra = if ex.label == Label::BonaFide && n_bona > 0 {
            cons += sample_consistency(&trace.embeddings);
            (lambda != 0.0).then(|| sample_consistency_grad(&trace.embeddings).scale(lambda / n_bona as f64))
        } else {
            None
        };
        backward(&trace, grad_logit, extra.as_ref(), params, cfg, &mut grads)?;
    }
    let cons_mean = if n_bona > 0 { cons / n_bona as f64 } else { 0.0 };
    Ok((LossBreakdown::new(cls / n, cons_mean, lambda), grads))
}

/// Loss only, for finite-difference checks and validation.
pub fn batch_loss(batch: &[Example<'_>], params: &ModelParams, cfg: &ModelConfig) -> Result<LossBreakdown> {
    batch_loss_region(batch, params, cfg).map(|(l, _)| l)
}

/// Loss plus a fingerprint of the activation region it was evaluated in.
pub(crate) fn batch_loss_region(
    batch: &[Example<'_>],
    params: &ModelParams,
    cfg: &ModelConfig,
) -> Result<(LossBreakdown, u64)> {
    let mut hasher = DefaultHasher::new();
    let mut traces = Vec::with_capacity(batch.len());
    let mut labels = Vec::with_capacity(batch.len());
    for ex in batch {
        let specs: Vec<&Tensor> = ex.specs.iter().map(|s| &s.values).collect();
        traces.push(forward_values(&specs, params, cfg, ex.dataset_id)?);
        labels.push(ex.label);
    }
    traces.iter().for_each(|t| t.region(&mut hasher));
    Ok((total_loss(&traces, &labels, cfg), hasher.finish()))
}
