use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{sample_categorical, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exp3Config {
    /// Uniform exploration mixed into every draw.
    pub gamma: f64,
    pub eta: f64,
}

impl Default for Exp3Config {
    fn default() -> Self {
        Self { gamma: 0.1, eta: 0.1 }
    }
}

/// Exponentially weighted forecaster under bandit feedback: only the pulled
/// arm's reward is seen, so it enters as an inverse-propensity estimate.
/// Weights are kept as logarithms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exp3 {
    config: Exp3Config,
    log_weights: Vec<f64>,
}

impl Exp3 {
    pub fn new(arms: usize, config: Exp3Config) -> Result<Self> {
        if arms == 0 {
            return Err(Error::InvalidParam("a bandit needs at least one arm".into()));
        }
        if !(config.gamma > 0.0 && config.gamma <= 1.0) || !(config.eta > 0.0) {
            return Err(Error::InvalidParam(format!(
                "exploration {} must lie in (0, 1] and learning rate {} be positive",
                config.gamma, config.eta
            )));
        }
        Ok(Self {
            config,
            log_weights: vec![0.0; arms],
        })
    }

    pub fn arms(&self) -> usize {
        self.log_weights.len()
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn probabilities(&self) -> Vec<f64> {
        let k = self.arms() as f64;
        let max = self.log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = self.log_weights.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = w.iter().sum();
        w.iter()
            .map(|x| (1.0 - self.config.gamma) * x / total + self.config.gamma / k)
            .collect()
    }

    pub fn sample(&self, rng: &mut SimRng) -> usize {
        sample_categorical(&self.probabilities(), rng)
    }

    /// Credits `reward` (in `[-1, 1]`) to the pulled `arm`.
    pub fn update(&mut self, arm: usize, reward: f64) -> Result<()> {
        if arm >= self.arms() || !reward.is_finite() {
            return Err(Error::InvalidParam(format!(
                "update of arm {arm} of {} with reward {reward}",
                self.arms()
            )));
        }
        let p = self.probabilities()[arm];
        self.log_weights[arm] += self.config.eta * reward / p;
        // only differences matter; recentring keeps the logs bounded
        let max = self.log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        self.log_weights.iter_mut().for_each(|l| *l -= max);
        Ok(())
    }
}
