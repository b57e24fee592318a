use crate::error::{AutodiffError, Result};
use crate::params::ParamStore;
use crate::real::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn new(lr: f64) -> Self {
        AdamConfig { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First/second moment estimates and the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<F> {
    pub m: Vec<Vec<F>>,
    pub v: Vec<Vec<F>>,
    pub step: u64,
}

impl<F: Real> AdamState<F> {
    pub fn for_params(store: &ParamStore<F>) -> Self {
        let zeros = || store.iter().map(|p| vec![F::zero(); p.value.numel()]).collect();
        AdamState { m: zeros(), v: zeros(), step: 0 }
    }
}

/// One bias-corrected Adam update using the gradients held in `store`.
pub fn adam_step<F: Real>(store: &mut ParamStore<F>, state: &mut AdamState<F>, cfg: &AdamConfig) -> Result<()> {
    if !(cfg.lr > 0.0) {
        return Err(AutodiffError::StateMismatch(format!("learning rate must be positive, got {}", cfg.lr)));
    }
    if state.m.len() != store.len() || state.v.len() != store.len() {
        return Err(AutodiffError::StateMismatch(format!(
            "{} moment buffers for {} parameters",
            state.m.len(),
            store.len()
        )));
    }
    for ((p, m), v) in store.iter().zip(&state.m).zip(&state.v) {
        if m.len() != p.value.numel() || v.len() != p.value.numel() {
            return Err(AutodiffError::StateMismatch(format!("moment shape differs for {}", p.name)));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let (b1, b2) = (F::c(cfg.beta1), F::c(cfg.beta2));
    let step_size = F::c(cfg.lr / bc1);
    let bc2_sqrt = F::c(bc2.sqrt());
    let eps = F::c(cfg.eps);
    for ((p, m), v) in store.iter_mut().zip(&mut state.m).zip(&mut state.v) {
        let data = p.value.data_mut();
        for i in 0..data.len() {
            let g = p.grad[i];
            m[i] = b1 * m[i] + (F::one() - b1) * g;
            v[i] = b2 * v[i] + (F::one() - b2) * g * g;
            data[i] -= step_size * m[i] / (v[i].sqrt() / bc2_sqrt + eps);
        }
    }
    Ok(())
}
