use serde::{Deserialize, Serialize};

use super::NetworkParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates plus the number of steps taken.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: NetworkParams,
    v: NetworkParams,
    step: u64,
}

impl AdamState {
    pub fn new(params: &NetworkParams) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Bias-corrected Adam update of `params` in place.
    pub fn step(
        &mut self,
        params: &mut NetworkParams,
        grads: &NetworkParams,
        cfg: &AdamConfig,
    ) -> Result<()> {
        if grads.dims != params.dims || self.m.dims != params.dims {
            return Err(Error::shape(
                format!("{:?}", params.dims),
                format!("{:?}", grads.dims),
            ));
        }
        if !grads.is_finite() {
            return Err(Error::NonFinite(format!(
                "gradient at optimizer step {}",
                self.step + 1
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        let fields = params
            .fields_mut()
            .into_iter()
            .zip(grads.fields())
            .zip(self.m.fields_mut())
            .zip(self.v.fields_mut());
        for (((theta, g), m), v) in fields {
            for i in 0..theta.len() {
                let gi = g[i];
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                theta[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
            }
        }
        Ok(())
    }
}
