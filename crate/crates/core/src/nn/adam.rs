use serde::{Deserialize, Serialize};

use super::{mismatch, NnError, QNetwork};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub base_lr: f64,
    /// Multiplicative decay applied every `decay_every` steps.
    pub decay: f64,
    pub decay_every: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            base_lr: 1e-4,
            decay: 0.95,
            decay_every: 1000,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    /// `base_lr · decay^⌊step / decay_every⌋`.
    pub fn learning_rate(&self, step: u64) -> f64 {
        let k = step / self.decay_every.max(1);
        self.base_lr * self.decay.powf(k as f64)
    }
}

/// Adam moments and the number of updates applied so far.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: AdamConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(n_params: usize, config: AdamConfig) -> Self {
        OptimizerState {
            config,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step: 0,
        }
    }

    pub fn for_network(net: &QNetwork) -> Self {
        OptimizerState::new(net.n_params(), AdamConfig::default())
    }

    /// Learning rate used by the next update.
    pub fn effective_lr(&self) -> f64 {
        self.config.learning_rate(self.step)
    }
}

/// One bias-corrected Adam update of `net` using the stepped schedule.
pub fn adam_step(net: &mut QNetwork, grads: &[f64], opt: &mut OptimizerState) -> Result<(), NnError> {
    let n = net.n_params();
    if grads.len() != n {
        return Err(mismatch(format!("{n} gradients"), grads.len()));
    }
    if opt.m.len() != n || opt.v.len() != n {
        return Err(mismatch(format!("{n} moments"), opt.m.len()));
    }
    let c = opt.config;
    let lr = opt.effective_lr();
    let t = (opt.step + 1) as i32;
    let inv_bc1 = 1.0 / (1.0 - c.beta1.powi(t));
    let inv_bc2 = 1.0 / (1.0 - c.beta2.powi(t));
    let (b1, b2) = (c.beta1, c.beta2);
    let params = net.params_mut();
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut opt.m).zip(&mut opt.v) {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        *p -= lr * (*m * inv_bc1) / ((*v * inv_bc2).sqrt() + c.eps);
    }
    opt.step += 1;
    Ok(())
}
