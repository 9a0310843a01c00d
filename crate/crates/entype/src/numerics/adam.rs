//! Adam optimizer with bias correction, applied per parameter.

use serde::{Deserialize, Serialize};

use super::{NumericsError, Parameter};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), NumericsError> {
        if self.learning_rate <= 0.0 {
            return Err(NumericsError::InvalidOptimizerConfig(format!(
                "learning_rate {} must be positive",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(NumericsError::InvalidOptimizerConfig(format!(
                "betas ({}, {}) must lie in [0, 1)",
                self.beta1, self.beta2
            )));
        }
        if self.epsilon <= 0.0 {
            return Err(NumericsError::InvalidOptimizerConfig(format!(
                "epsilon {} must be positive",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// One bias-corrected Adam update. Consumes `p.grad` (zeroed afterwards)
/// and advances the moment buffers and step count.
pub fn adam_step(p: &mut Parameter, cfg: &AdamConfig) {
    let t = p.step_count + 1;
    let bc1 = 1.0 - cfg.beta1.powi(t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(t as i32);
    let n = p.value.len();
    for i in 0..n {
        let g = p.grad.data()[i];
        let m = cfg.beta1 * p.m.data()[i] + (1.0 - cfg.beta1) * g;
        let v = cfg.beta2 * p.v.data()[i] + (1.0 - cfg.beta2) * g * g;
        p.m.data_mut()[i] = m;
        p.v.data_mut()[i] = v;
        let m_hat = m / bc1;
        let v_hat = v / bc2;
        p.value.data_mut()[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        p.grad.data_mut()[i] = 0.0;
    }
    p.step_count = t;
}
