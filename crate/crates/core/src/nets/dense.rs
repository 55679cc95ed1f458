use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Self::Relu => x.max(0.0),
            Self::Tanh => x.tanh(),
            Self::Identity => x,
        }
    }

    /// Derivative expressed through the activation output `y`.
    fn grad_from_output(self, y: f64) -> f64 {
        match self {
            Self::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Tanh => 1.0 - y * y,
            Self::Identity => 1.0,
        }
    }
}

/// Fully connected layer; `w` is `n_out × n_in`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub n_in: usize,
    pub n_out: usize,
    pub act: Activation,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Layer {
    fn n_params(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

/// Stack of dense layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNet {
    layers: Vec<Layer>,
}

/// Activations kept from a forward pass.
#[derive(Debug, Clone)]
pub struct DenseCache {
    /// `acts[0]` is the input, `acts[l + 1]` the output of layer `l`.
    acts: Vec<Vec<f64>>,
    /// Smallest `|z|` fed into a relu.
    relu_margin: f64,
}

impl DenseCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("non-empty cache")
    }

    /// Distance of the closest relu input from its kink; finite-difference
    /// checks are only meaningful when this exceeds the probe step.
    pub fn relu_margin(&self) -> f64 {
        self.relu_margin
    }
}

impl DenseNet {
    /// Layers of the given widths with `hidden` activations and `output`
    /// on the last layer. Weights are uniform in `±sqrt(6 / (n_in + n_out))`,
    /// biases zero.
    pub fn new(sizes: &[usize], hidden: Activation, output: Activation, rng: &mut SimRng) -> Result<Self> {
        let mut net = Self::zeros(sizes, hidden, output)?;
        for l in &mut net.layers {
            let bound = (6.0 / (l.n_in + l.n_out) as f64).sqrt();
            for w in &mut l.w {
                *w = rng.random_range(-bound..bound);
            }
        }
        Ok(net)
    }

    pub fn zeros(sizes: &[usize], hidden: Activation, output: Activation) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidParam(format!("invalid layer sizes {sizes:?}")));
        }
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(k, pair)| Layer {
                n_in: pair[0],
                n_out: pair[1],
                act: if k == last { output } else { hidden },
                w: vec![0.0; pair[0] * pair[1]],
                b: vec![0.0; pair[1]],
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn n_in(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn n_out(&self) -> usize {
        self.layers.last().expect("non-empty").n_out
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(Layer::n_params).sum()
    }

    /// Flat parameters: per layer, weights row-major then biases.
    pub fn params(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            v.extend_from_slice(&l.w);
            v.extend_from_slice(&l.b);
        }
        v
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.n_params() {
            return Err(Error::Dimension(format!(
                "{} parameters for a net with {}",
                p.len(),
                self.n_params()
            )));
        }
        let mut off = 0;
        for l in &mut self.layers {
            let nw = l.w.len();
            l.w.copy_from_slice(&p[off..off + nw]);
            off += nw;
            let nb = l.b.len();
            l.b.copy_from_slice(&p[off..off + nb]);
            off += nb;
        }
        Ok(())
    }

    /// `(name, shape)` per tensor, in flat order.
    pub fn shapes(&self, prefix: &str) -> Vec<(String, Vec<usize>)> {
        let mut v = Vec::new();
        for (k, l) in self.layers.iter().enumerate() {
            v.push((format!("{prefix}.{k}.w"), vec![l.n_out, l.n_in]));
            v.push((format!("{prefix}.{k}.b"), vec![l.n_out]));
        }
        v
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_cached(x)?.acts.pop().expect("output"))
    }

    pub fn forward_cached(&self, x: &[f64]) -> Result<DenseCache> {
        if x.len() != self.n_in() {
            return Err(Error::Dimension(format!(
                "net input of length {}, expected {}",
                x.len(),
                self.n_in()
            )));
        }
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        let mut relu_margin = f64::INFINITY;
        for l in &self.layers {
            let input = acts.last().expect("input");
            let out: Vec<f64> = (0..l.n_out)
                .map(|o| {
                    let row = &l.w[o * l.n_in..(o + 1) * l.n_in];
                    let z = l.b[o] + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>();
                    if l.act == Activation::Relu {
                        relu_margin = relu_margin.min(z.abs());
                    }
                    l.act.apply(z)
                })
                .collect();
            acts.push(out);
        }
        if acts.last().expect("output").iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dense net output".into()));
        }
        Ok(DenseCache { acts, relu_margin })
    }

    /// Accumulates parameter gradients into `grads` (flat layout) and
    /// returns the gradient with respect to the input.
    pub fn backward(&self, cache: &DenseCache, upstream: &[f64], grads: &mut [f64]) -> Result<Vec<f64>> {
        if upstream.len() != self.n_out() || grads.len() != self.n_params() {
            return Err(Error::Dimension(format!(
                "backward with upstream {} (expected {}) and grads {} (expected {})",
                upstream.len(),
                self.n_out(),
                grads.len(),
                self.n_params()
            )));
        }
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for l in &self.layers {
            offsets.push(off);
            off += l.n_params();
        }
        let mut g = upstream.to_vec();
        for (k, l) in self.layers.iter().enumerate().rev() {
            let out = &cache.acts[k + 1];
            let input = &cache.acts[k];
            let dz: Vec<f64> = g
                .iter()
                .zip(out)
                .map(|(g, y)| g * l.act.grad_from_output(*y))
                .collect();
            let base = offsets[k];
            let (gw, gb) = grads[base..base + l.n_params()].split_at_mut(l.w.len());
            let mut gin = vec![0.0; l.n_in];
            for (o, &d) in dz.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                gb[o] += d;
                let row = &l.w[o * l.n_in..(o + 1) * l.n_in];
                let grow = &mut gw[o * l.n_in..(o + 1) * l.n_in];
                for c in 0..l.n_in {
                    grow[c] += d * input[c];
                    gin[c] += d * row[c];
                }
            }
            g = gin;
        }
        Ok(g)
    }

    /// Output, input gradient and parameter gradient for one input.
    pub fn forward_backward(&self, x: &[f64], upstream: &[f64]) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let cache = self.forward_cached(x)?;
        let mut grads = vec![0.0; self.n_params()];
        let gin = self.backward(&cache, upstream, &mut grads)?;
        Ok((cache.output().to_vec(), gin, grads))
    }
}
