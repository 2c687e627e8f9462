//! First-order ascent steps: Adam and plain gradient steps.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    #[serde(rename = "plain_gd")]
    PlainGd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Optimizer state for one matrix parameter.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: DMatrix<f64>,
    v: DMatrix<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self { m: DMatrix::zeros(rows, cols), v: DMatrix::zeros(rows, cols), t: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }
}

/// Bias-corrected Adam update for an ascent direction `grad`.
/// The caller adds the returned update to the parameter.
pub fn adam_step(state: &mut AdamState, grad: &DMatrix<f64>, lr: f64, params: AdamParams) -> DMatrix<f64> {
    assert_eq!(state.m.shape(), grad.shape(), "Adam state shape mismatch");
    let AdamParams { beta1, beta2, eps } = params;
    state.t += 1;
    let t = state.t as i32;
    state.m.zip_apply(grad, |m, g| *m = beta1 * *m + (1.0 - beta1) * g);
    state.v.zip_apply(grad, |v, g| *v = beta2 * *v + (1.0 - beta2) * g * g);
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    state.m.zip_map(&state.v, |m, v| lr * (m / c1) / ((v / c2).sqrt() + eps))
}

/// Either optimizer behind one interface.
#[derive(Debug, Clone)]
pub enum Optimizer {
    Adam { state: AdamState, params: AdamParams },
    PlainGd,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, rows: usize, cols: usize, params: AdamParams) -> Self {
        match kind {
            OptimizerKind::Adam => Optimizer::Adam { state: AdamState::new(rows, cols), params },
            OptimizerKind::PlainGd => Optimizer::PlainGd,
        }
    }

    pub fn update(&mut self, grad: &DMatrix<f64>, lr: f64) -> DMatrix<f64> {
        match self {
            Optimizer::Adam { state, params } => adam_step(state, grad, lr, *params),
            Optimizer::PlainGd => grad * lr,
        }
    }
}
