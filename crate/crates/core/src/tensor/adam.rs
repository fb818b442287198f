use super::ParamSet;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment estimates, one buffer per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &ParamSet) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.numel()]).collect();
        AdamState { step: 0, m: zeros.clone(), v: zeros }
    }
}

/// One bias-corrected Adam update. `grads[i]` of `None` is treated as zero.
/// The parameters are left untouched if any gradient is non-finite.
pub fn adam_step(
    params: &mut ParamSet,
    grads: &[Option<Vec<f64>>],
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::Dimension(format!(
            "adam: {} params, {} grads, {} moment buffers",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, g) in grads.iter().enumerate() {
        let numel = params.tensors()[i].numel();
        if state.m[i].len() != numel {
            return Err(Error::Dimension(format!("adam state for {} has wrong size", params.names()[i])));
        }
        if let Some(g) = g {
            if g.len() != numel {
                return Err(Error::Dimension(format!("gradient for {} has wrong size", params.names()[i])));
            }
            if g.iter().any(|x| !x.is_finite()) {
                return Err(Error::Numeric(format!("non-finite gradient for {}", params.names()[i])));
            }
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (i, tensor) in params.tensors_mut().iter_mut().enumerate() {
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        let g = grads[i].as_deref();
        for (j, p) in tensor.data_mut().iter_mut().enumerate() {
            let gj = g.map_or(0.0, |g| g[j]);
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj;
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj;
            let mhat = m[j] / bc1;
            let vhat = v[j] / bc2;
            *p -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}
