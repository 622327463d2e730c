use serde::{Deserialize, Serialize};

/// First and second moment estimates of ADAM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }
}

/// One bias-corrected ADAM update of `theta` in place.
///
/// # Panics
/// If the state, parameter and gradient lengths differ.
pub fn adam_step(state: &mut AdamState, theta: &mut [f64], grad: &[f64], lr: f64, beta1: f64, beta2: f64, eps: f64) {
    assert!(
        state.m.len() == theta.len() && grad.len() == theta.len(),
        "ADAM state, parameters and gradient must have equal length"
    );
    state.t += 1;
    let c1 = 1.0 - beta1.powi(state.t as i32);
    let c2 = 1.0 - beta2.powi(state.t as i32);
    for i in 0..theta.len() {
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * grad[i];
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * grad[i] * grad[i];
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        theta[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}
