//! Mini-batch Adam training with validation-EER model selection.

use std::borrow::Cow;

use rand::seq::SliceRandom;

use super::config::ModelConfig;
use super::loss::{loss_and_gradients, Example, LossBreakdown};
use super::network::forward;
use super::params::ModelParams;
use crate::dsp::MelSpectrogram;
use crate::error::{Error, Result};
use crate::metrics::{eer, ScoreRecord, ScoreSet};
use crate::nn::{adam_update, bce_with_logit, AdamState};
use crate::rng;
use crate::Label;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 15, batch_size: 32, lr: 1e-4, seed: 0 }
    }
}

/// Labelled examples whose features may vary per epoch (random cropping).
pub trait ExampleSource: Sync {
    fn len(&self) -> usize;
    fn label(&self, index: usize) -> Label;
    fn dataset_id(&self, index: usize) -> usize;
    fn speaker(&self, index: usize) -> &str;
    /// Spectrograms (fine, medium, coarse) of example `index` for `epoch`.
    fn features(&self, index: usize, epoch: usize) -> Result<Cow<'_, [MelSpectrogram]>>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Precomputed, epoch-independent features.
#[derive(Debug, Clone, Default)]
pub struct FeatureSet {
    pub items: Vec<LabeledFeatures>,
}

#[derive(Debug, Clone)]
pub struct LabeledFeatures {
    pub specs: Vec<MelSpectrogram>,
    pub label: Label,
    pub dataset_id: usize,
    pub speaker: String,
}

impl ExampleSource for FeatureSet {
    fn len(&self) -> usize {
        self.items.len()
    }

    fn label(&self, index: usize) -> Label {
        self.items[index].label
    }

    fn dataset_id(&self, index: usize) -> usize {
        self.items[index].dataset_id
    }

    fn speaker(&self, index: usize) -> &str {
        &self.items[index].speaker
    }

    fn features(&self, index: usize, _epoch: usize) -> Result<Cow<'_, [MelSpectrogram]>> {
        Ok(Cow::Borrowed(&self.items[index].specs))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean of the per-batch training losses.
    pub loss: LossBreakdown,
    pub val_eer: f64,
    pub val_bce: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

impl TrainOutcome {
    pub fn best(&self) -> &EpochRecord {
        &self.history[self.best_epoch - 1]
    }
}

/// Optimizer state for every parameter tensor.
#[derive(Debug, Clone)]
pub struct Adam {
    states: Vec<AdamState>,
}

impl Adam {
    pub fn new(params: &ModelParams, lr: f64) -> Self {
        let states = params
            .tensors()
            .iter()
            .map(|t| AdamState::for_tensor(t, lr))
            .collect();
        Self { states }
    }

    pub fn step(&mut self, params: &mut ModelParams, grads: &ModelParams) {
        for ((value, grad), state) in params.tensors_mut().into_iter().zip(grads.tensors()).zip(&mut self.states) {
            adam_update(value, grad, state);
        }
    }
}

/// Score every example: logits (spoof evidence) with labels.
pub fn score_source(source: &dyn ExampleSource, params: &ModelParams, cfg: &ModelConfig) -> Result<ScoreSet> {
    let mut records = Vec::with_capacity(source.len());
    for i in 0..source.len() {
        let feats = source.features(i, 0)?;
        let trace = forward(&feats, params, cfg, source.dataset_id(i))?;
        records.push(ScoreRecord {
            score: trace.logit,
            label: source.label(i),
            speaker_id: source.speaker(i).to_string(),
            dataset_id: source.dataset_id(i),
        });
    }
    Ok(ScoreSet { records })
}

fn mean_bce(scores: &ScoreSet) -> f64 {
    scores.records.iter().map(|r| bce_with_logit(r.score, r.label.as_f64())).sum::<f64>() / scores.records.len() as f64
}

/// Train from a seeded initialization and keep the epoch with the lowest
/// validation EER (ties go to the lower validation BCE, then the earlier
/// epoch).
pub fn train(
    train_set: &dyn ExampleSource,
    val_set: &dyn ExampleSource,
    cfg: &ModelConfig,
    run: &TrainConfig,
) -> Result<TrainOutcome> {
    let init = ModelParams::init(cfg, run.seed)?;
    train_from(init, train_set, val_set, cfg, run, |_| {})
}

pub fn train_from(
    mut params: ModelParams,
    train_set: &dyn ExampleSource,
    val_set: &dyn ExampleSource,
    cfg: &ModelConfig,
    run: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    if train_set.is_empty() {
        return Err(Error::data("training split is empty"));
    }
    if val_set.is_empty() {
        return Err(Error::data("validation split is empty"));
    }
    if run.epochs == 0 || run.batch_size == 0 {
        return Err(Error::config("epochs and batch size must be positive"));
    }
    let mut opt = Adam::new(&params, run.lr);
    let mut history = Vec::with_capacity(run.epochs);
    let mut best: Option<(f64, f64, usize, ModelParams)> = None;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=run.epochs {
        let mut shuffle_rng = rng::stream(run.seed, rng::purpose::SHUFFLE | epoch as u64);
        order.sort_unstable();
        order.shuffle(&mut shuffle_rng);
        let mut sums = LossBreakdown::default();
        let mut batches = 0usize;
        for chunk in order.chunks(run.batch_size) {
            let feats: Vec<Cow<'_, [MelSpectrogram]>> =
                chunk.iter().map(|&i| train_set.features(i, epoch)).collect::<Result<_>>()?;
            let batch: Vec<Example<'_>> = chunk
                .iter()
                .zip(&feats)
                .map(|(&i, f)| Example { specs: f, label: train_set.label(i), dataset_id: train_set.dataset_id(i) })
                .collect();
            let (loss, grads) = loss_and_gradients(&batch, &params, cfg)?;
            opt.step(&mut params, &grads);
            sums.total += loss.total;
            sums.cls += loss.cls;
            sums.cons += loss.cons;
            batches += 1;
        }
        let nb = batches as f64;
        let loss = LossBreakdown { total: sums.total / nb, cls: sums.cls / nb, cons: sums.cons / nb, lambda: cfg.effective_lambda() };
        let scores = score_source(val_set, &params, cfg)?;
        let (val_eer, _) = eer(&scores)?;
        let val_bce = mean_bce(&scores);
        let record = EpochRecord { epoch, loss, val_eer, val_bce };
        on_epoch(&record);
        history.push(record);
        let better = match &best {
            None => true,
            Some((e, b, _, _)) => val_eer < *e || (val_eer == *e && val_bce < *b),
        };
        if better {
            best = Some((val_eer, val_bce, epoch, params.clone()));
        }
    }
    let (_, _, best_epoch, params) = best.expect("at least one epoch");
    Ok(TrainOutcome { params, best_epoch, history })
}
