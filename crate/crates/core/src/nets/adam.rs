use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Adaptive-moment optimiser constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

/// Moment estimates for one flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, dim: usize) -> Self {
        Self {
            config,
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.m.len()
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One bias-corrected descent step `params -= lr · m̂ / (√v̂ + eps)`.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Dimension(format!(
                "optimiser state has {} entries, params {}, grads {}",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        self.t += 1;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for k in 0..params.len() {
            let g = grads[k];
            self.m[k] = beta1 * self.m[k] + (1.0 - beta1) * g;
            self.v[k] = beta2 * self.v[k] + (1.0 - beta2) * g * g;
            let m_hat = self.m[k] / c1;
            let v_hat = self.v[k] / c2;
            params[k] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut opt = Adam::new(AdamConfig::default(), 3);
        let mut p = vec![1.0, -2.0, 3.0];
        for _ in 0..10 {
            opt.step(&mut p, &[0.0; 3]).unwrap();
        }
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn first_step_is_about_lr() {
        // m̂ = g and v̂ = g² after one step, so the move is lr·|g|/(|g|+eps).
        for g in [1e-3, 1.0, 1e3] {
            let mut opt = Adam::new(AdamConfig::with_lr(0.01), 1);
            let mut p = vec![0.0];
            opt.step(&mut p, &[g]).unwrap();
            let expected = -0.01 * g / (g + 1e-8);
            assert!((p[0] - expected).abs() < 1e-15, "g={g}: {}", p[0]);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let mut opt = Adam::new(AdamConfig::default(), 2);
        assert!(opt.step(&mut [0.0; 3], &[0.0; 3]).is_err());
    }
}
