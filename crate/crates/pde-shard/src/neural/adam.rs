//! ADAM optimizer over a flat parameter vector.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Optimizer hyperparameters. The learning rate and smoothing value follow
/// the source defaults (0.01 and 1e-8); the decay rates are the usual
/// 0.9 / 0.999.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub eta: f64,
    pub rho1: f64,
    pub rho2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            eta: 0.01,
            rho1: 0.9,
            rho2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.eta > 0.0
            && (0.0..1.0).contains(&self.rho1)
            && (0.0..1.0).contains(&self.rho2)
            && self.eps > 0.0;
        if !ok {
            return Err(Error::Config(format!(
                "adam config out of range: eta={} rho1={} rho2={} eps={}",
                self.eta, self.rho1, self.rho2, self.eps
            )));
        }
        Ok(())
    }
}

/// Moment estimates for one parameter vector. Both moments start at zero
/// and `t` counts completed steps.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub cfg: AdamConfig,
    pub t: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(param_count: usize, cfg: AdamConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(AdamState {
            cfg,
            t: 0,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
        })
    }

    /// One update: decay both moments toward the gradient, bias-correct by
    /// the incremented step count, then move the parameters by
    /// `-eta * m_hat / sqrt(v_hat + eps)` (the smoothing value sits inside
    /// the square root).
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::ShapeMismatch(format!(
                "adam step on {} params / {} grads with state of {}",
                params.len(),
                grads.len(),
                self.m.len()
            )));
        }
        self.t = self.t.checked_add(1).expect("adam step counter overflowed");
        let t = i32::try_from(self.t).expect("adam step counter exceeds i32");
        let bc1 = 1.0 - self.cfg.rho1.powi(t);
        let bc2 = 1.0 - self.cfg.rho2.powi(t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.cfg.rho1 * self.m[i] + (1.0 - self.cfg.rho1) * g;
            self.v[i] = self.cfg.rho2 * self.v[i] + (1.0 - self.cfg.rho2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.cfg.eta * m_hat / (v_hat + self.cfg.eps).sqrt();
        }
        Ok(())
    }
}
