//! Adam with decoupled weight decay, plus the warmup/cosine LR schedule.

use super::Real;
use crate::error::{Error, Result};

/// Optimizer hyperparameters. Defaults follow the training setup:
/// momentum (0.9, 0.95), weight decay 0.05, eps 1e-8.
#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.9, beta2: 0.95, weight_decay: 0.05, eps: 1e-8 }
    }
}

/// Per-parameter first/second moment arrays plus the shared step counter.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    pub step: u64,
    pub cfg: AdamConfig,
}

impl<T: Real> AdamState<T> {
    /// Moment arrays sized to match `param_lens[i]` elements each.
    pub fn new(param_lens: &[usize], cfg: AdamConfig) -> Self {
        AdamState {
            m: param_lens.iter().map(|&n| vec![T::zero(); n]).collect(),
            v: param_lens.iter().map(|&n| vec![T::zero(); n]).collect(),
            step: 0,
            cfg,
        }
    }

    /// One bias-corrected Adam update with decoupled weight decay.
    ///
    /// Weight decay is applied to the weights directly (`p -= lr * wd * p`),
    /// independent of the moment estimates. A missing gradient is a
    /// contract error: the caller decides what "no gradient" means.
    pub fn step(&mut self, params: &mut [Vec<T>], grads: &[Option<Vec<T>>], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != params.len() {
            return Err(Error::Contract(format!(
                "adam_step: {} params, {} grads, {} moment slots",
                params.len(),
                grads.len(),
                self.m.len()
            )));
        }
        for (i, g) in grads.iter().enumerate() {
            match g {
                None => return Err(Error::Contract(format!("adam_step: missing grad for param {i}"))),
                Some(g) if g.len() != params[i].len() => {
                    return Err(Error::Contract(format!(
                        "adam_step: grad len {} vs param len {} at {i}",
                        g.len(),
                        params[i].len()
                    )))
                }
                _ => {}
            }
        }
        self.step += 1;
        let t = self.step as f64;
        let b1 = T::from_f64(self.cfg.beta1);
        let b2 = T::from_f64(self.cfg.beta2);
        let one_m_b1 = T::from_f64(1.0 - self.cfg.beta1);
        let one_m_b2 = T::from_f64(1.0 - self.cfg.beta2);
        let bc1 = T::from_f64(1.0 / (1.0 - self.cfg.beta1.powf(t)));
        let bc2 = T::from_f64(1.0 / (1.0 - self.cfg.beta2.powf(t)));
        let lr_t = T::from_f64(lr);
        let wd = T::from_f64(lr * self.cfg.weight_decay);
        let eps = T::from_f64(self.cfg.eps);

        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            let g = g.as_ref().expect("checked above");
            for j in 0..p.len() {
                p[j] = p[j] - wd * p[j];
                m[j] = b1 * m[j] + one_m_b1 * g[j];
                v[j] = b2 * v[j] + one_m_b2 * g[j] * g[j];
                let mhat = m[j] * bc1;
                let vhat = v[j] * bc2;
                p[j] = p[j] - lr_t * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Linear warmup from 0 to `base_lr`, then cosine decay to `min_lr`.
///
/// `step` counts from 0; the schedule reaches `base_lr` exactly at
/// `step == warmup_steps` and `min_lr` at `step == total_steps`.
pub fn lr_schedule(step: u64, warmup_steps: u64, total_steps: u64, base_lr: f64, min_lr: f64) -> Result<f64> {
    if warmup_steps >= total_steps {
        return Err(Error::Config(format!(
            "lr_schedule: warmup {warmup_steps} must be < total {total_steps}"
        )));
    }
    if step < warmup_steps {
        return Ok(base_lr * step as f64 / warmup_steps as f64);
    }
    let progress = ((step - warmup_steps) as f64 / (total_steps - warmup_steps) as f64).min(1.0);
    Ok(min_lr + 0.5 * (base_lr - min_lr) * (1.0 + (std::f64::consts::PI * progress).cos()))
}
