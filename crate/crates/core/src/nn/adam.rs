use ndarray::Zip;
use serde::{Deserialize, Serialize};

use super::MlpParams;
use crate::error::{Result, WdpdError};

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

/// Moment estimates and step count of the Adam optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub t: u64,
    first: MlpParams,
    second: MlpParams,
}

impl AdamState {
    pub fn new(params: &MlpParams, config: AdamConfig) -> Result<Self> {
        let ok = |b: f64| b > 0.0 && b < 1.0;
        if !(ok(config.beta1) && ok(config.beta2)) {
            return Err(WdpdError::Config(format!(
                "Adam betas must lie in (0, 1), got {} and {}",
                config.beta1, config.beta2
            )));
        }
        Ok(Self {
            config,
            t: 0,
            first: MlpParams::zeros(&params.spec),
            second: MlpParams::zeros(&params.spec),
        })
    }

    /// One bias-corrected update of `params` in place.
    pub fn step(&mut self, params: &mut MlpParams, grads: &MlpParams) -> Result<()> {
        if !grads.is_finite() {
            return Err(WdpdError::Numeric("gradient".into()));
        }
        self.t += 1;
        let AdamConfig {
            learning_rate: lr,
            beta1: b1,
            beta2: b2,
            epsilon: eps,
        } = self.config;
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        let update = |p: &mut f64, &g: &f64, m: &mut f64, v: &mut f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        };
        for (((p, g), m), v) in params
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.first.layers)
            .zip(&mut self.second.layers)
        {
            Zip::from(&mut p.weights)
                .and(&g.weights)
                .and(&mut m.weights)
                .and(&mut v.weights)
                .for_each(update);
            Zip::from(&mut p.bias)
                .and(&g.bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .for_each(update);
        }
        Ok(())
    }
}
