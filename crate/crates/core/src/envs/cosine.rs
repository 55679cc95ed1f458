use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linear_ac::FeatureMap;
use crate::mg_core::{FiniteMG, Layout, ObservationMap, Outcome};

/// Discount of the repeated variant.
pub const COSINE_DISCOUNT: f64 = 0.95;

/// Largest joint table the tabular export will build.
const TABLE_BUDGET: u128 = 20_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CosineMode {
    /// The state ends after one step.
    OneStep,
    /// The same state is presented forever, discounted by 0.95.
    Repeated,
}

/// Toy homogeneous game: agent `i` carries the constant local state
/// `cos(i/(N-1) π)` (0-based `i`) and picks 0 or 1. The dense team reward is
/// the fraction of non-negative agents playing 1 minus the fraction of
/// negative agents playing 1, so the optimum +1 is reached exactly when
/// the non-negative agents play 1 and the rest play 0.
#[derive(Debug, Clone, PartialEq)]
pub struct CosineToyMG {
    n: usize,
    mode: CosineMode,
    values: Vec<f64>,
}

impl CosineToyMG {
    pub fn new(n: usize, mode: CosineMode) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParam(format!(
                "the cosine game needs at least two agents, got {n}"
            )));
        }
        let values = (0..n)
            .map(|i| (i as f64 / (n - 1) as f64 * PI).cos())
            .collect();
        Ok(Self { n, mode, values })
    }

    pub fn n_agents(&self) -> usize {
        self.n
    }

    pub fn mode(&self) -> CosineMode {
        self.mode
    }

    pub fn discount(&self) -> f64 {
        match self.mode {
            CosineMode::OneStep => 1.0,
            CosineMode::Repeated => COSINE_DISCOUNT,
        }
    }

    /// Local state values `s^i`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Per-agent reward weights: `R(s, a) = Σ_i w_i 1[a^i = 1]`.
    pub fn reward_weights(&self) -> Vec<f64> {
        weights_for(&self.values)
    }

    /// Team reward of a joint action in the game's state.
    pub fn reward(&self, actions: &[usize]) -> f64 {
        reward_for(&self.values, actions)
    }

    /// Expected team reward when agent `i` plays 1 with probability
    /// `p_one[i]`, independently. Exact by linearity.
    pub fn expected_reward(&self, p_one: &[f64]) -> f64 {
        self.reward_weights()
            .iter()
            .zip(p_one)
            .map(|(w, p)| w * p)
            .sum()
    }

    /// `a^i = 1` exactly for agents with `s^i ≥ 0`.
    pub fn optimal_actions(&self) -> Vec<usize> {
        self.values.iter().map(|&v| usize::from(v >= 0.0)).collect()
    }

    /// Numeric observation of agent `i`: its own value followed by every
    /// agent's value in descending order.
    pub fn observation_features(&self, agent: usize) -> Vec<f64> {
        let mut all = self.values.clone();
        all.sort_by(|a, b| b.total_cmp(a));
        let mut o = Vec::with_capacity(self.n + 1);
        o.push(self.values[agent]);
        o.extend(all);
        o
    }

    /// Local index tuple of the game's (only reachable) state.
    pub fn state_locals(&self) -> Vec<usize> {
        (0..self.n).collect()
    }

    fn local_labels(&self) -> Vec<String> {
        let mut v: Vec<String> = (0..self.n).map(|k| format!("c{k}")).collect();
        if self.mode == CosineMode::OneStep {
            v.push("done".into());
        }
        v
    }

    /// Value of local index `k`; the `done` marker maps to 0.
    fn local_value(&self, k: usize) -> f64 {
        self.values.get(k).copied().unwrap_or(0.0)
    }

    /// Full tabular form over the product of local spaces.
    pub fn to_finite_mg(&self) -> Result<FiniteMG> {
        let labels = self.local_labels();
        let n_local = labels.len() as u128;
        let needed = n_local.pow(self.n as u32) * (1u128 << self.n);
        if needed > TABLE_BUDGET {
            return Err(Error::BudgetExceeded {
                what: format!("cosine game table for N={}", self.n),
                needed,
                budget: TABLE_BUDGET,
            });
        }
        let layout = Layout {
            local_states: vec![labels; self.n],
            local_actions: vec![vec!["0".to_string(), "1".to_string()]; self.n],
        };
        let done = self.n;
        let mode = self.mode;
        FiniteMG::tabulate(
            layout,
            self.discount(),
            &[(self.state_locals(), 1.0)],
            |s| mode == CosineMode::OneStep && s.iter().all(|&k| k == done),
            |s, a| {
                let live = s.iter().all(|&k| k != done);
                let r = if live {
                    let vals: Vec<f64> = s.iter().map(|&k| self.local_value(k)).collect();
                    reward_for(&vals, a)
                } else {
                    0.0
                };
                let next = match mode {
                    CosineMode::OneStep => vec![done; self.n],
                    CosineMode::Repeated => s.to_vec(),
                };
                Outcome {
                    next: vec![(next, 1.0)],
                    rewards: vec![r; self.n],
                }
            },
        )
    }

    /// `o^i(s)`: own local state plus the sorted multiset of all local states.
    pub fn observations(&self, mg: &FiniteMG) -> Result<ObservationMap> {
        let labels = self.local_labels();
        ObservationMap::tabulate(mg, false, |i, s| {
            let mut all: Vec<&str> = s.iter().map(|&k| labels[k].as_str()).collect();
            all.sort_unstable();
            format!("{}|{}", labels[s[i]], all.join(","))
        })
    }

    /// Critic features `φ(s, a) = concat_i [s^i, one_hot(a^i)]`, dimension `3N`.
    pub fn critic_features(&self) -> FeatureMap {
        let game = self.clone();
        let n = self.n;
        FeatureMap::new(
            3 * n,
            Arc::new(move |s: &[usize], a: &[usize]| {
                let mut phi = Vec::with_capacity(3 * n);
                for i in 0..n {
                    phi.push(game.local_value(s[i]));
                    phi.push(if a[i] == 0 { 1.0 } else { 0.0 });
                    phi.push(if a[i] == 1 { 1.0 } else { 0.0 });
                }
                phi
            }),
        )
    }
}

fn weights_for(values: &[f64]) -> Vec<f64> {
    let pos = values.iter().filter(|&&v| v >= 0.0).count();
    let neg = values.len() - pos;
    values
        .iter()
        .map(|&v| {
            if v >= 0.0 {
                1.0 / pos as f64
            } else {
                -1.0 / neg as f64
            }
        })
        .collect()
}

fn reward_for(values: &[f64], actions: &[usize]) -> f64 {
    weights_for(values)
        .iter()
        .zip(actions)
        .filter(|(_, &a)| a == 1)
        .map(|(w, _)| w)
        .sum()
}
