use super::{Parameter, Tensor};

pub const DEFAULT_BETA1: f64 = 0.9;
pub const DEFAULT_BETA2: f64 = 0.999;
pub const DEFAULT_EPS: f64 = 1e-8;

/// Adam moment estimates for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Tensor,
    pub v: Tensor,
    pub t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(param: &Parameter, lr: f64) -> Self {
        Self::for_tensor(&param.value, lr)
    }

    /// Fresh state shaped like `value`.
    pub fn for_tensor(value: &Tensor, lr: f64) -> Self {
        Self {
            m: Tensor::zeros_like(value),
            v: Tensor::zeros_like(value),
            t: 0,
            lr,
            beta1: DEFAULT_BETA1,
            beta2: DEFAULT_BETA2,
            eps: DEFAULT_EPS,
        }
    }
}

/// One bias-corrected Adam update from `param.grad`. The gradient is left
/// in place.
pub fn adam_step(param: &mut Parameter, state: &mut AdamState) {
    adam_update(&mut param.value, &param.grad, state);
}

pub fn adam_update(value: &mut Tensor, grad: &Tensor, state: &mut AdamState) {
    state.t += 1;
    let bc1 = 1.0 - state.beta1.powi(state.t as i32);
    let bc2 = 1.0 - state.beta2.powi(state.t as i32);
    let step = state.lr / bc1;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    let values = value.data_mut();
    let grads = grad.data();
    let m = state.m.data_mut();
    let v = state.v.data_mut();
    for i in 0..values.len() {
        let g = grads[i];
        m[i] = b1 * m[i] + (1.0 - b1) * g;
        v[i] = b2 * v[i] + (1.0 - b2) * g * g;
        values[i] -= step * m[i] / ((v[i] / bc2).sqrt() + eps);
    }
}
