use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nets::{Activation, DenseCache, DenseNet, GumbelSample};
use crate::rng::SimRng;

/// Logit index of the "communicate" category.
pub const OPEN: usize = 0;

/// Length of a neighbor embedding (its relative position).
pub const EMBED_DIM: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GateConfig {
    /// Target fraction of open gates.
    pub eta: f64,
    /// Weight of the rate regularizer.
    pub alpha: f64,
    pub tau: f64,
    /// Average open probabilities over the selected neighbors only, instead
    /// of over all neighbors.
    pub literal_regularizer: bool,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            eta: 0.5,
            alpha: 200.0,
            tau: 1.0,
            literal_regularizer: false,
        }
    }
}

impl GateConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta < 1.0) || !(self.alpha >= 0.0) || !(self.tau > 0.0) {
            return Err(Error::InvalidParam(format!(
                "gate rate {} must lie in (0, 1), weight {} be nonnegative and temperature {} positive",
                self.eta, self.alpha, self.tau
            )));
        }
        Ok(())
    }
}

/// How a gate sample enters the forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GateMode {
    /// One-hot forward, relaxed backward.
    StraightThrough,
    /// Relaxed forward and backward; used to check gradients.
    Relaxed,
}

/// Per-neighbor communication gate. Each neighbor `j` is encoded from
/// `[o_i, e_j]`, the encodings are mean-pooled into a context, and a head
/// maps `[enc_j, context]` to two logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub encoder: DenseNet,
    pub head: DenseNet,
}

/// Forward values of one gate evaluation.
#[derive(Debug, Clone)]
pub struct GateCache {
    enc: Vec<DenseCache>,
    head: Vec<DenseCache>,
    pub logits: Vec<[f64; 2]>,
}

impl GateCache {
    pub fn open_probs(&self) -> Vec<f64> {
        self.logits.iter().map(|l| open_prob(*l)).collect()
    }

    pub fn relu_margin(&self) -> f64 {
        self.enc
            .iter()
            .chain(&self.head)
            .map(DenseCache::relu_margin)
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn open_prob(l: [f64; 2]) -> f64 {
    1.0 / (1.0 + (l[1 - OPEN] - l[OPEN]).exp())
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

impl Gate {
    /// Both logits start equal (zero output layer), so an untrained gate
    /// opens with probability one half.
    pub fn new(obs_dim: usize, hidden: usize, rng: &mut SimRng) -> Result<Self> {
        let encoder = DenseNet::new(&[obs_dim + EMBED_DIM, hidden, hidden], Activation::Relu, Activation::Relu, rng)?;
        let mut head = DenseNet::new(&[2 * hidden, hidden, 2], Activation::Relu, Activation::Identity, rng)?;
        let mut p = head.params();
        let last = hidden * 2 + 2;
        let n = p.len();
        p[n - last..].iter_mut().for_each(|x| *x = 0.0);
        head.set_params(&p)?;
        Ok(Self { encoder, head })
    }

    pub fn n_params(&self) -> usize {
        self.encoder.n_params() + self.head.n_params()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = self.encoder.params();
        p.extend(self.head.params());
        p
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.n_params() {
            return Err(Error::Dimension(format!("{} parameters for a gate with {}", p.len(), self.n_params())));
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

    /// Logits for each neighbor embedding, in the given order.
    pub fn forward(&self, obs: &[f64], embeds: &[[f64; 2]]) -> Result<GateCache> {
        let k = embeds.len();
        if k == 0 {
            return Ok(GateCache {
                enc: Vec::new(),
                head: Vec::new(),
                logits: Vec::new(),
            });
        }
        let enc: Vec<DenseCache> = embeds
            .iter()
            .map(|e| {
                let mut x = obs.to_vec();
                x.extend_from_slice(e);
                self.encoder.forward_cached(&x)
            })
            .collect::<Result<_>>()?;
        // canonical accumulation order keeps the context order-free bit for bit
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| lexicographic(enc[a].output(), enc[b].output()));
        let width = self.encoder.n_out();
        let mut ctx = vec![0.0; width];
        for &j in &order {
            for (c, x) in ctx.iter_mut().zip(enc[j].output()) {
                *c += x;
            }
        }
        ctx.iter_mut().for_each(|c| *c /= k as f64);
        let head: Vec<DenseCache> = enc
            .iter()
            .map(|c| {
                let mut x = c.output().to_vec();
                x.extend_from_slice(&ctx);
                self.head.forward_cached(&x)
            })
            .collect::<Result<_>>()?;
        let logits = head.iter().map(|h| [h.output()[0], h.output()[1]]).collect();
        Ok(GateCache { enc, head, logits })
    }

    /// Accumulates parameter gradients given the gradient of each
    /// neighbor's logits.
    pub fn backward(&self, cache: &GateCache, d_logits: &[[f64; 2]], grads: &mut [f64]) -> Result<()> {
        let k = cache.logits.len();
        if d_logits.len() != k || grads.len() != self.n_params() {
            return Err(Error::Dimension("gate backward shapes".into()));
        }
        if k == 0 {
            return Ok(());
        }
        let (ge, gh) = grads.split_at_mut(self.encoder.n_params());
        let width = self.encoder.n_out();
        let mut d_enc = Vec::with_capacity(k);
        let mut d_ctx = vec![0.0; width];
        for (h, d) in cache.head.iter().zip(d_logits) {
            let g = self.head.backward(h, d, gh)?;
            d_enc.push(g[..width].to_vec());
            for (c, x) in d_ctx.iter_mut().zip(&g[width..]) {
                *c += x;
            }
        }
        for (c, mut d) in cache.enc.iter().zip(d_enc) {
            for (x, c) in d.iter_mut().zip(&d_ctx) {
                *x += c / k as f64;
            }
            self.encoder.backward(c, &d, ge)?;
        }
        Ok(())
    }
}

/// Gumbel draws for one gate evaluation, two per neighbor.
pub fn gate_noise(k: usize, rng: &mut SimRng) -> Vec<[f64; 2]> {
    (0..k)
        .map(|_| {
            let g = crate::nets::gumbel_noise(2, rng);
            [g[0], g[1]]
        })
        .collect()
}

/// Samples every neighbor's gate with fixed noise.
pub fn sample_gates(logits: &[[f64; 2]], noise: &[[f64; 2]], tau: f64) -> Result<Vec<GumbelSample>> {
    logits
        .iter()
        .zip(noise)
        .map(|(l, g)| GumbelSample::new(l, g.to_vec(), tau))
        .collect()
}

/// Forward value of a gate sample under `mode`.
pub fn gate_value(s: &GumbelSample, mode: GateMode) -> f64 {
    match mode {
        GateMode::StraightThrough => s.hard()[OPEN],
        GateMode::Relaxed => s.soft[OPEN],
    }
}
