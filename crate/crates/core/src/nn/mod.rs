//! Dense `f64` tensors, the detector's layers with hand-written backward
//! passes, Adam, gradient checking and the parameter archive.

mod adam;
mod attention;
pub mod checkpoint;
mod gradcheck;
mod layers;
mod param;
mod tensor;

pub use adam::{adam_step, adam_update, AdamState, DEFAULT_BETA1, DEFAULT_BETA2, DEFAULT_EPS};
pub use attention::{multi_head_self_attention, AttentionGrads, AttentionOutput, AttentionWeights};
pub use gradcheck::{finite_difference_check, finite_difference_check_piecewise, GradCheckEntry, GradCheckOptions, GradCheckReport};
pub(crate) use layers::{conv2d_backward_with_cols, conv2d_with_cols};
pub use layers::{
    adaptive_avg_pool_1x1, adaptive_avg_pool_backward, bce_loss, bce_with_logit, bce_with_logit_grad, conv2d,
    conv2d_backward, l2_normalize, l2_normalize_backward, linear, linear_backward, max_pool_2x2, relu,
    relu_backward, sigmoid, Conv2dGrads, LinearGrads, MaxPool, NORMALIZE_EPS,
};
pub use param::Parameter;
pub use tensor::{matmul, Tensor};
