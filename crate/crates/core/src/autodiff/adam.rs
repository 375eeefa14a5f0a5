use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::ParamSet;

/// How the weight-decay coefficient enters the update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum WeightDecay {
    /// `p ← p − lr·wd·p`, separate from the adaptive step.
    #[default]
    Decoupled,
    /// `g ← g + wd·p` before the moment updates.
    Coupled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub decay_mode: WeightDecay,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            decay_mode: WeightDecay::Decoupled,
        }
    }
}

/// Moment buffers and step counter of one Adam optimizer.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
    step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &ParamSet<T>, config: AdamConfig) -> Self {
        let zeros = |p: &crate::autodiff::Parameter<T>| vec![T::zero(); p.values.len()];
        Self {
            config,
            first: params.iter().map(zeros).collect(),
            second: params.iter().map(zeros).collect(),
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn learning_rate(&self) -> f64 {
        self.config.learning_rate
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.config.learning_rate = lr;
    }

    /// One bias-corrected Adam update. Parameters without a gradient are
    /// treated as having a zero gradient.
    pub fn step(&mut self, params: &mut ParamSet<T>, grads: &[Option<Vec<T>>]) -> Result<()> {
        if grads.len() != params.len() || self.first.len() != params.len() {
            return Err(Error::shape(format!(
                "adam: {} parameters, {} gradients, {} moment buffers",
                params.len(),
                grads.len(),
                self.first.len()
            )));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.first) {
            if m.len() != p.values.len() || g.as_ref().is_some_and(|g| g.len() != p.values.len()) {
                return Err(Error::shape(format!("adam: buffer mismatch for {}", p.name)));
            }
        }

        self.step += 1;
        let c = &self.config;
        let lr = T::lit(c.learning_rate);
        let b1 = T::lit(c.beta1);
        let b2 = T::lit(c.beta2);
        let eps = T::lit(c.eps);
        let wd = T::lit(c.weight_decay);
        let t = self.step as i32;
        let bias1 = T::one() - b1.powi(t);
        let bias2 = T::one() - b2.powi(t);

        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first.iter_mut())
            .zip(self.second.iter_mut())
        {
            for i in 0..p.values.len() {
                let mut grad = g.as_ref().map_or(T::zero(), |g| g[i]);
                if c.decay_mode == WeightDecay::Coupled {
                    grad = grad + wd * p.values[i];
                }
                m[i] = b1 * m[i] + (T::one() - b1) * grad;
                v[i] = b2 * v[i] + (T::one() - b2) * grad * grad;
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                if c.decay_mode == WeightDecay::Decoupled {
                    p.values[i] = p.values[i] - lr * wd * p.values[i];
                }
                p.values[i] = p.values[i] - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
