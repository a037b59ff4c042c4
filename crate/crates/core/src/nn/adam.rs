use serde::{Deserialize, Serialize};

use super::model::{Gradients, ModelParams};
use crate::{Error, Result};

/// ADAM optimizer state: step counter, moment estimates shaped like the
/// model's tensors, and hyper-parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub eta: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub const EPSILON: f64 = 1e-8;

    pub fn new(params: &ModelParams, eta: f64, beta1: f64, beta2: f64) -> Result<Self> {
        let zeros: Vec<Vec<f64>> = params.tensors().map(|t| vec![0.0; t.len()]).collect();
        let state = Self {
            step: 0,
            eta,
            beta1,
            beta2,
            epsilon: Self::EPSILON,
            m: zeros.clone(),
            v: zeros,
        };
        state.validate()?;
        Ok(state)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.eta > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0
            && self.m.len() == self.v.len()
            && self.v.iter().flatten().all(|&x| x >= 0.0);
        if !ok {
            return Err(Error::InvalidArgument(format!(
                "invalid ADAM state (eta {}, beta1 {}, beta2 {}, epsilon {})",
                self.eta, self.beta1, self.beta2, self.epsilon
            )));
        }
        Ok(())
    }

    /// True when the moment buffers line up with `params`.
    pub fn matches(&self, params: &ModelParams) -> bool {
        self.m.len() == self.v.len()
            && self.m.len() == params.tensors().count()
            && params
                .tensors()
                .zip(self.m.iter().zip(&self.v))
                .all(|(t, (m, v))| t.len() == m.len() && t.len() == v.len())
    }

    /// One bias-corrected ADAM update of `params` in place.
    pub fn step(&mut self, params: &mut ModelParams, grads: &Gradients) -> Result<()> {
        if !self.matches(params) || !grads.matches(params) {
            return Err(Error::ShapeMismatch(
                "gradients or optimizer state do not match the parameters".into(),
            ));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, eta, eps) = (self.beta1, self.beta2, self.eta, self.epsilon);
        for (((theta, g), m), v) in params
            .tensors_mut()
            .zip(grads.tensors())
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for i in 0..theta.len() {
                let gi = g[i];
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                theta[i] -= eta * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
