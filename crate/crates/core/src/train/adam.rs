//! Adam with bias-corrected moments.

use crate::error::{Error, Result};
use crate::nets::ParamSet;
use crate::real::Real;
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
        AdamConfig { lr: 2e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Per-parameter first/second moment arrays, parallel to the `ParamSet`
/// entry order.
#[derive(Debug, Clone)]
pub struct AdamState<T: Real> {
    pub step: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new(params: &ParamSet<T>) -> Self {
        let m = params.entries().iter().map(|e| vec![T::zero(); e.tensor.numel()]).collect();
        let v = params.entries().iter().map(|e| vec![T::zero(); e.tensor.numel()]).collect();
        AdamState { step: 0, m, v }
    }
}

/// One update. Non-finite gradients reject the whole step (state and
/// parameters untouched).
pub fn adam_step<T: Real>(
    params: &mut ParamSet<T>,
    grads: &[Vec<T>],
    state: &mut AdamState<T>,
    cfg: &AdamConfig,
) -> Result<()> {
    if grads.len() != params.len() {
        return Err(Error::shape("adam_step", "gradient count mismatch"));
    }
    for (k, g) in grads.iter().enumerate() {
        if g.len() != params.entries()[k].tensor.numel() {
            return Err(Error::shape("adam_step", "gradient size mismatch"));
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("adam_step: gradient"));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for k in 0..grads.len() {
        let m = &mut state.m[k];
        let v = &mut state.v[k];
        let p = params.get_mut(crate::nets::ParamKey(k));
        let pv = p.values_mut();
        for i in 0..grads[k].len() {
            let g = grads[k][i].as_f64();
            let mi = cfg.beta1 * m[i].as_f64() + (1.0 - cfg.beta1) * g;
            let vi = cfg.beta2 * v[i].as_f64() + (1.0 - cfg.beta2) * g * g;
            m[i] = T::from_f64(mi);
            v[i] = T::from_f64(vi);
            let update = cfg.lr * (mi / bc1) / ((vi / bc2).sqrt() + cfg.eps);
            pv[i] = T::from_f64(pv[i].as_f64() - update);
        }
    }
    Ok(())
}

/// Scale gradients in place so their global L2 norm is at most `max_norm`.
pub fn clip_global_norm<T: Real>(grads: &mut [Vec<T>], max_norm: f64) -> f64 {
    let mut sq = 0f64;
    for g in grads.iter() {
        for v in g {
            let x = v.as_f64();
            sq += x * x;
        }
    }
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            for v in g.iter_mut() {
                *v = T::from_f64(v.as_f64() * scale);
            }
        }
    }
    norm
}
