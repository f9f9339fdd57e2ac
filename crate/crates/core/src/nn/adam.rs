use crate::{math, Error, Result};

use super::MlpParams;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_div: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-4, beta1: 0.0, beta2: 0.9, eps_div: 1e-8 }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps_div > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config("invalid Adam hyperparameters"))
        }
    }
}

/// First and second moment estimates for one parameter set.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    m: MlpParams,
    v: MlpParams,
    t: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, like: &MlpParams) -> Self {
        Self { config, m: like.zeros_like(), v: like.zeros_like(), t: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn second_moment(&self) -> &MlpParams {
        &self.v
    }

    /// One bias-corrected Adam update of `p` along `-grads`. Non-finite
    /// gradients or parameters abort with a training fault.
    pub fn step(&mut self, p: &mut MlpParams, grads: &MlpParams) -> Result<()> {
        if !p.same_shape(grads) || !p.same_shape(&self.m) {
            return Err(Error::Config("Adam state shape mismatch"));
        }
        if !grads.is_finite() {
            return Err(Error::TrainingFault { iteration: self.t, reason: "non-finite gradient" });
        }
        self.t += 1;
        let AdamConfig { learning_rate: lr, beta1: b1, beta2: b2, eps_div } = self.config;
        let c1 = 1.0 - math::powi(b1, self.t);
        let c2 = 1.0 - math::powi(b2, self.t);
        let params = p.tensors_mut();
        let ms = self.m.tensors_mut();
        let vs = self.v.tensors_mut();
        for (((pt, gt), mt), vt) in params.into_iter().zip(grads.tensors()).zip(ms).zip(vs) {
            for i in 0..pt.len() {
                let g = gt[i];
                mt[i] = b1 * mt[i] + (1.0 - b1) * g;
                vt[i] = b2 * vt[i] + (1.0 - b2) * g * g;
                let m_hat = mt[i] / c1;
                let v_hat = vt[i] / c2;
                pt[i] -= lr * m_hat / (math::sqrt(v_hat) + eps_div);
            }
        }
        if !p.is_finite() {
            return Err(Error::TrainingFault { iteration: self.t, reason: "non-finite parameters" });
        }
        Ok(())
    }
}
