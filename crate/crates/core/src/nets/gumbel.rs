use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Standard Gumbel draws `-ln(-ln u)`.
pub fn gumbel_noise(k: usize, rng: &mut SimRng) -> Vec<f64> {
    (0..k)
        .map(|_| {
            // open interval keeps both logs finite
            let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
            -(-u.ln()).ln()
        })
        .collect()
}

/// One straight-through sample: the forward value is the one-hot of
/// `argmax(logits + noise)`, gradients flow through
/// `softmax((logits + noise) / τ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GumbelSample {
    pub noise: Vec<f64>,
    pub soft: Vec<f64>,
    pub index: usize,
    pub tau: f64,
}

impl GumbelSample {
    pub fn new(logits: &[f64], noise: Vec<f64>, tau: f64) -> Result<Self> {
        if logits.len() < 2 || noise.len() != logits.len() {
            return Err(Error::Dimension(format!(
                "{} logits with {} noise values (need at least two categories)",
                logits.len(),
                noise.len()
            )));
        }
        if !(tau > 0.0) {
            return Err(Error::InvalidParam(format!("temperature must be positive, got {tau}")));
        }
        let z: Vec<f64> = logits.iter().zip(&noise).map(|(l, g)| (l + g) / tau).collect();
        let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
        let sum: f64 = e.iter().sum();
        let soft: Vec<f64> = e.into_iter().map(|v| v / sum).collect();
        let index = z
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (k, &v)| if v > acc.1 { (k, v) } else { acc })
            .0;
        Ok(Self {
            noise,
            soft,
            index,
            tau,
        })
    }

    pub fn hard(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.soft.len()];
        v[self.index] = 1.0;
        v
    }

    /// Gradient with respect to the logits given the gradient with respect
    /// to the sample: the softmax Jacobian (scaled by `1/τ`) applied to `dy`.
    pub fn backward(&self, dy: &[f64]) -> Vec<f64> {
        let dot: f64 = self.soft.iter().zip(dy).map(|(s, g)| s * g).sum();
        self.soft
            .iter()
            .zip(dy)
            .map(|(s, g)| s * (g - dot) / self.tau)
            .collect()
    }
}

/// Draws straight-through samples at a fixed temperature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GumbelSampler {
    pub tau: f64,
}

impl Default for GumbelSampler {
    fn default() -> Self {
        Self { tau: 1.0 }
    }
}

impl GumbelSampler {
    pub fn sample(&self, logits: &[f64], rng: &mut SimRng) -> Result<GumbelSample> {
        GumbelSample::new(logits, gumbel_noise(logits.len(), rng), self.tau)
    }
}
