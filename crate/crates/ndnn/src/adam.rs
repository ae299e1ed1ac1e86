use crate::error::{NnError, Result};
use crate::param::Param;
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-6 }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(NnError::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(NnError::Config(format!("{name} must be in [0, 1), got {b}")));
            }
        }
        if !(self.eps > 0.0) {
            return Err(NnError::Config(format!("eps must be positive, got {}", self.eps)));
        }
        Ok(())
    }
}

/// Bias-corrected Adam update of every trainable parameter, then zero grads.
///
/// Frozen parameters keep their value and moments; their gradients are
/// cleared as well. Parameters that never received a gradient are skipped.
pub fn adam_step<T: Real>(params: &mut [&mut Param<T>], cfg: &AdamConfig) {
    for p in params.iter_mut() {
        if p.frozen || p.grad.is_empty() {
            p.zero_grad();
            continue;
        }
        if !p.has_adam_state() {
            p.adam_m = vec![T::zero(); p.len()];
            p.adam_v = vec![T::zero(); p.len()];
        }
        p.step_count += 1;
        let t = p.step_count as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        let Param { value, grad, adam_m, adam_v, .. } = &mut **p;
        for (((w, g), m), v) in
            value.data_mut().iter_mut().zip(grad.iter_mut()).zip(adam_m.iter_mut()).zip(adam_v.iter_mut())
        {
            let gf = g.as_f64();
            let mf = cfg.beta1 * m.as_f64() + (1.0 - cfg.beta1) * gf;
            let vf = cfg.beta2 * v.as_f64() + (1.0 - cfg.beta2) * gf * gf;
            *m = T::from_f64_lossy(mf);
            *v = T::from_f64_lossy(vf);
            let step = cfg.lr * (mf / c1) / ((vf / c2).sqrt() + cfg.eps);
            *w = T::from_f64_lossy(w.as_f64() - step);
            *g = T::zero();
        }
    }
}
