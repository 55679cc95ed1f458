use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::dense::{DenseCache, DenseNet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pooling {
    Mean,
    Max,
}

/// `head(pool_k encoder(x_k))` over a set of elements.
///
/// Elements are accumulated in a canonical order (lexicographic on their
/// values), so the output does not depend on the order they are given in,
/// bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetPoolNet {
    pub encoder: DenseNet,
    pub head: DenseNet,
    pub pooling: Pooling,
}

/// Intermediate values of a forward pass.
#[derive(Debug, Clone)]
pub struct SetPoolCache {
    /// Canonical order: `order[k]` is the caller's index of the k-th element.
    order: Vec<usize>,
    enc: Vec<DenseCache>,
    weights: Vec<f64>,
    total_weight: f64,
    pooled: Vec<f64>,
    /// For max pooling, the canonical position of the winner per unit.
    argmax: Vec<usize>,
    head: DenseCache,
}

impl SetPoolCache {
    pub fn output(&self) -> &[f64] {
        self.head.output()
    }

    pub fn relu_margin(&self) -> f64 {
        self.enc
            .iter()
            .map(DenseCache::relu_margin)
            .fold(self.head.relu_margin(), f64::min)
    }
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

impl SetPoolNet {
    pub fn new(encoder: DenseNet, head: DenseNet, pooling: Pooling) -> Result<Self> {
        if encoder.n_out() != head.n_in() {
            return Err(Error::Dimension(format!(
                "encoder width {} does not feed a head of input {}",
                encoder.n_out(),
                head.n_in()
            )));
        }
        Ok(Self {
            encoder,
            head,
            pooling,
        })
    }

    pub fn n_params(&self) -> usize {
        self.encoder.n_params() + self.head.n_params()
    }

    pub fn element_dim(&self) -> usize {
        self.encoder.n_in()
    }

    /// Encoder parameters followed by head parameters.
    pub fn params(&self) -> Vec<f64> {
        let mut p = self.encoder.params();
        p.extend(self.head.params());
        p
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.n_params() {
            return Err(Error::Dimension(format!(
                "{} parameters for a set net with {}",
                p.len(),
                self.n_params()
            )));
        }
        let (e, h) = p.split_at(self.encoder.n_params());
        self.encoder.set_params(e)?;
        self.head.set_params(h)
    }

    pub fn shapes(&self, prefix: &str) -> Vec<(String, Vec<usize>)> {
        let mut v = self.encoder.shapes(&format!("{prefix}.encoder"));
        v.extend(self.head.shapes(&format!("{prefix}.head")));
        v
    }

    pub fn forward(&self, elements: &[Vec<f64>]) -> Result<Vec<f64>> {
        Ok(self.forward_cached(elements, None)?.output().to_vec())
    }

    /// Forward pass. With `weights`, mean pooling becomes the weighted mean
    /// `Σ w_k e_k / Σ w_k` (max pooling ignores elements of weight zero).
    pub fn forward_cached(&self, elements: &[Vec<f64>], weights: Option<&[f64]>) -> Result<SetPoolCache> {
        if elements.is_empty() {
            return Err(Error::Dimension("set pooling over an empty set".into()));
        }
        if let Some(w) = weights {
            if w.len() != elements.len() || w.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(Error::InvalidParam("set weights must be finite, nonnegative, one per element".into()));
            }
        }
        let mut order: Vec<usize> = (0..elements.len()).collect();
        order.sort_by(|&a, &b| {
            lexicographic(&elements[a], &elements[b]).then_with(|| {
                let wa = weights.map_or(1.0, |w| w[a]);
                let wb = weights.map_or(1.0, |w| w[b]);
                wa.total_cmp(&wb)
            })
        });
        let enc: Vec<DenseCache> = order
            .iter()
            .map(|&k| self.encoder.forward_cached(&elements[k]))
            .collect::<Result<_>>()?;
        let w: Vec<f64> = order.iter().map(|&k| weights.map_or(1.0, |w| w[k])).collect();
        let width = self.encoder.n_out();
        let total_weight: f64 = w.iter().sum();
        let mut pooled = vec![0.0; width];
        let mut argmax = Vec::new();
        match self.pooling {
            Pooling::Mean => {
                if total_weight <= 0.0 {
                    return Err(Error::InvalidParam("set weights sum to zero".into()));
                }
                for (c, &wk) in enc.iter().zip(&w) {
                    for (p, e) in pooled.iter_mut().zip(c.output()) {
                        *p += wk * e;
                    }
                }
                for p in &mut pooled {
                    *p /= total_weight;
                }
            }
            Pooling::Max => {
                argmax = vec![usize::MAX; width];
                for d in 0..width {
                    let mut best = f64::NEG_INFINITY;
                    for (k, c) in enc.iter().enumerate() {
                        if w[k] > 0.0 && c.output()[d] > best {
                            best = c.output()[d];
                            argmax[d] = k;
                        }
                    }
                    if argmax[d] == usize::MAX {
                        return Err(Error::InvalidParam("max pooling over all-zero weights".into()));
                    }
                    pooled[d] = best;
                }
            }
        }
        let head = self.head.forward_cached(&pooled)?;
        Ok(SetPoolCache {
            order,
            enc,
            weights: w,
            total_weight,
            pooled,
            argmax,
            head,
        })
    }

    /// Accumulates parameter gradients into `grads` and returns, in the
    /// caller's element order, the gradients with respect to each element
    /// and to each weight.
    pub fn backward(
        &self,
        cache: &SetPoolCache,
        upstream: &[f64],
        grads: &mut [f64],
    ) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        if grads.len() != self.n_params() {
            return Err(Error::Dimension(format!(
                "gradient buffer of {} for {} parameters",
                grads.len(),
                self.n_params()
            )));
        }
        let (ge, gh) = grads.split_at_mut(self.encoder.n_params());
        let d_pooled = self.head.backward(&cache.head, upstream, gh)?;
        let n = cache.order.len();
        let width = d_pooled.len();
        let mut d_elem = vec![Vec::new(); n];
        let mut d_weight = vec![0.0; n];
        for (k, c) in cache.enc.iter().enumerate() {
            let mut d_enc = vec![0.0; width];
            match self.pooling {
                Pooling::Mean => {
                    let scale = cache.weights[k] / cache.total_weight;
                    for d in 0..width {
                        d_enc[d] = d_pooled[d] * scale;
                    }
                    // ∂pooled/∂w_k = (e_k - pooled) / Σw
                    d_weight[cache.order[k]] = c
                        .output()
                        .iter()
                        .zip(&cache.pooled)
                        .zip(&d_pooled)
                        .map(|((e, p), g)| g * (e - p) / cache.total_weight)
                        .sum();
                }
                Pooling::Max => {
                    for d in 0..width {
                        if cache.argmax[d] == k {
                            d_enc[d] = d_pooled[d];
                        }
                    }
                }
            }
            d_elem[cache.order[k]] = self.encoder.backward(c, &d_enc, ge)?;
        }
        Ok((d_elem, d_weight))
    }
}
