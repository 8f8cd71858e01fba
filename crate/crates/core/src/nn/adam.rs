//! Adam with bias correction and classic L2-coupled weight decay
//! (g ← g + wd·θ before the moment updates).

use serde::{Deserialize, Serialize};

use super::{Gradients, ModelParams, NnError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self { lr: 9.23e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.0 }
    }
}

/// Per-parameter first and second moments plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub step: u64,
    pub hyper: AdamHyper,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(params: &ModelParams, hyper: AdamHyper) -> Self {
        let n = params.param_count();
        Self { step: 0, hyper, m: vec![0.0; n], v: vec![0.0; n] }
    }
}

/// One optimizer step, updating parameters and state in place.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &Gradients,
    state: &mut AdamState,
) -> Result<(), NnError> {
    if grads.param_count() != state.m.len() || params.param_count() != state.m.len() {
        return Err(NnError::ShapeMismatch(format!(
            "optimizer state holds {} values, params {} and grads {}",
            state.m.len(),
            params.param_count(),
            grads.param_count()
        )));
    }
    if grads.tensors().iter().any(|t| t.iter().any(|g| !g.is_finite())) {
        return Err(NnError::NonFiniteGradient);
    }
    state.step += 1;
    let hy = state.hyper;
    let bc1 = 1.0 - hy.beta1.powi(state.step as i32);
    let bc2 = 1.0 - hy.beta2.powi(state.step as i32);
    let mut cursor = 0;
    let grad_tensors = grads.tensors();
    for (ti, pt) in params.tensors_mut().into_iter().enumerate() {
        let gt = grad_tensors[ti];
        for (p, &g_raw) in pt.iter_mut().zip(gt) {
            let g = g_raw + hy.weight_decay * *p;
            let m = &mut state.m[cursor];
            let v = &mut state.v[cursor];
            *m = hy.beta1 * *m + (1.0 - hy.beta1) * g;
            *v = hy.beta2 * *v + (1.0 - hy.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= hy.lr * m_hat / (v_hat.sqrt() + hy.eps);
            cursor += 1;
        }
    }
    Ok(())
}
