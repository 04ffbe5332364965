//! Adam with bias correction.

use super::Tensor;

/// Default learning rate; every trainer config can override it.
pub const DEFAULT_LEARNING_RATE: f64 = 1e-5;

/// Per-parameter optimizer state plus its hyperparameters.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub step_count: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub learning_rate: f64,
}

/// Hyperparameter bundle used when states are created lazily.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            learning_rate: DEFAULT_LEARNING_RATE,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamState {
    pub fn new(numel: usize, hp: AdamParams) -> Self {
        AdamState {
            step_count: 0,
            m: vec![0.0; numel],
            v: vec![0.0; numel],
            beta1: hp.beta1,
            beta2: hp.beta2,
            epsilon: hp.epsilon,
            learning_rate: hp.learning_rate,
        }
    }
}

/// One bias-corrected Adam update in place. The parameter's gradient must be
/// populated; it is zeroed after the update. Panics on missing or
/// mis-shaped state/grad.
pub fn adam_step(param: &mut Tensor, state: &mut AdamState) {
    let grad = param.grad.as_ref().unwrap_or_else(|| {
        panic!(
            "adam_step: parameter of shape {:?} has no gradient",
            param.shape
        )
    });
    assert_eq!(
        grad.len(),
        param.data.len(),
        "adam_step: grad length {} vs param {:?}",
        grad.len(),
        param.shape
    );
    assert_eq!(
        state.m.len(),
        param.data.len(),
        "adam_step: state sized {} vs param {:?}",
        state.m.len(),
        param.shape
    );

    state.step_count += 1;
    let t = state.step_count as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for i in 0..param.data.len() {
        let g = grad[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        param.data[i] -= state.learning_rate * m_hat / (v_hat.sqrt() + state.epsilon);
    }
    param.zero_grad();
}
