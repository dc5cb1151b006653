use serde::{Deserialize, Serialize};

use super::{GradientVector, ParameterVector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-3,
        }
    }
}

impl AdamWConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.weight_decay >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "invalid optimizer hyperparameters {self:?}"
            )))
        }
    }
}

/// Adam with decoupled weight decay and bias-corrected moments.
///
/// ```text
/// θ ← θ − lr·wd·θ
/// m ← β1·m + (1−β1)·g          v ← β2·v + (1−β2)·g²
/// θ ← θ − lr · m̂ / (√v̂ + ε)    m̂ = m/(1−β1ᵗ), v̂ = v/(1−β2ᵗ)
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub config: AdamWConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamW {
    pub fn new(config: AdamWConfig, len: usize) -> Self {
        AdamW {
            config,
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }

    /// Apply one update. Parameters are left untouched if any gradient
    /// element is non-finite.
    pub fn step(&mut self, params: &mut ParameterVector, grads: &GradientVector) -> Result<()> {
        if !grads.same_layout(params) || self.m.len() != params.len() {
            return Err(Error::LayoutMismatch(format!(
                "optimizer over {} values, params {}, grads {}",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        grads.check_finite()?;

        self.step += 1;
        let AdamWConfig {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        let decay = 1.0 - lr * weight_decay;

        for (((p, &g), m), v) in params
            .values_mut()
            .iter_mut()
            .zip(grads.values())
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            *p *= decay;
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}
