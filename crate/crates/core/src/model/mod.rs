//! The resolution-aware detector: per-resolution CNN encoders, attention
//! fusion, losses, complexity accounting, Grad-CAM and training.

mod check;
mod complexity;
mod config;
mod gradcam;
mod loss;
mod network;
mod params;
mod train;

pub use check::{gradient_check_suite, GradCheckCase, SuiteOptions};
pub use complexity::{
    canonical_input_shapes, count_parameters, encoder_flops, estimate_flops, FlopBreakdown, ParameterBreakdown,
};
pub use config::{ModelConfig, Variant, ARCHITECTURE_VERSION};
pub use gradcam::{grad_cam, Heatmap};
pub use loss::{
    batch_loss, classification_loss, consistency_loss, loss_and_gradients, sample_consistency, total_loss, Example,
    LossBreakdown,
};
pub use network::{encode, forward, ForwardTrace};
pub use params::{ModelParams, PARAM_NAMES};
pub use train::{
    score_source, train, train_from, Adam, EpochRecord, ExampleSource, FeatureSet, LabeledFeatures, TrainConfig,
    TrainOutcome,
};
