use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::features::{FeatureMap, Row};
use crate::envs::{CosineMode, CosineToyMG};
use crate::error::{Error, Result};
use crate::exact_eval::{evaluate, solve_mspbe, FactoredPolicy};
use crate::linalg;
use crate::mg_core::{FiniteMG, ObservationMap};
use crate::rng::{seeded, SimRng};

pub use crate::rng::sample_categorical;

/// Local action distribution of `agent` in joint state `s`.
pub type PolicyFn<'a> = dyn Fn(&[usize], usize) -> Vec<f64> + 'a;

/// Support rows are enumerated up to this many joint actions and sampled
/// beyond it.
const ENUMERATE_ROWS: usize = 8192;

/// What the linear actor-critic needs from a game.
pub trait ActorCriticGame {
    fn n_agents(&self) -> usize;
    /// Local actions per agent (identical across agents).
    fn n_actions(&self) -> usize;
    fn discount(&self) -> f64;
    /// Length of the actor's observation feature vector.
    fn actor_dim(&self) -> usize;
    /// Actor features of agent `agent`'s observation in state `s`.
    fn actor_features(&self, s: &[usize], agent: usize) -> Vec<f64>;
    /// Critic features with full column rank on the game's support.
    fn critic_features(&self) -> Result<FeatureMap>;
    fn reset(&self, rng: &mut SimRng) -> Vec<usize>;
    /// Per-agent rewards and the next state (`None` when the episode ends).
    fn step(
        &self,
        s: &[usize],
        a: &[usize],
        rng: &mut SimRng,
    ) -> Result<(Vec<f64>, Option<Vec<usize>>)>;
    /// Exact performance of the product policy.
    fn performance(&self, policy: &PolicyFn<'_>) -> Result<f64>;
    /// Exact projected Bellman fixed point of the policy, when computable.
    fn critic_oracle(&self, policy: &PolicyFn<'_>, features: &FeatureMap) -> Result<Option<Vec<f64>>>;
}


/// A finite game with tabular observation features for the actor.
#[derive(Debug, Clone)]
pub struct TabularGame {
    mg: FiniteMG,
    obs: ObservationMap,
    features: Option<FeatureMap>,
}

impl TabularGame {
    /// Without explicit features the critic is tabular over reachable
    /// (state, joint action) pairs.
    pub fn new(mg: FiniteMG, obs: ObservationMap, features: Option<FeatureMap>) -> Result<Self> {
        obs.check_against(&mg)?;
        let k = mg.layout().local_actions[0].len();
        if mg.layout().local_actions.iter().any(|a| a.len() != k) {
            return Err(Error::InvalidModel(
                "agents need identical local action sets".into(),
            ));
        }
        Ok(Self { mg, obs, features })
    }

    pub fn mg(&self) -> &FiniteMG {
        &self.mg
    }

    pub fn observations(&self) -> &ObservationMap {
        &self.obs
    }

    fn support_rows(&self) -> Vec<Row> {
        let n_a = self.mg.n_joint_actions();
        self.mg
            .reachable_states()
            .into_iter()
            .flat_map(|s| (0..n_a).map(move |a| (s, a)))
            .map(|(s, a)| (self.mg.decode_state(s), self.mg.decode_action(a)))
            .collect()
    }

    /// State-indexed product policy over every state of the table.
    pub fn factored(&self, policy: &PolicyFn<'_>) -> Result<FactoredPolicy> {
        let tables = (0..self.mg.n_agents())
            .map(|i| {
                (0..self.mg.n_states())
                    .map(|s| policy(&self.mg.decode_state(s), i))
                    .collect()
            })
            .collect();
        FactoredPolicy::state_based(tables)
    }
}

impl ActorCriticGame for TabularGame {
    fn n_agents(&self) -> usize {
        self.mg.n_agents()
    }

    fn n_actions(&self) -> usize {
        self.mg.layout().local_actions[0].len()
    }

    fn discount(&self) -> f64 {
        self.mg.discount()
    }

    fn actor_dim(&self) -> usize {
        self.obs.space().len()
    }

    fn actor_features(&self, s: &[usize], agent: usize) -> Vec<f64> {
        let idx = self.mg.encode_state(s).expect("state from this game");
        let mut x = vec![0.0; self.obs.space().len()];
        x[self.obs.observe(agent, idx)] = 1.0;
        x
    }

    fn critic_features(&self) -> Result<FeatureMap> {
        let rows = self.support_rows();
        match &self.features {
            Some(f) => f.reduce(&rows),
            None => Ok(FeatureMap::tabular(&rows)),
        }
    }

    fn reset(&self, rng: &mut SimRng) -> Vec<usize> {
        let s = sample_categorical(self.mg.initial(), rng);
        self.mg.decode_state(s)
    }

    fn step(
        &self,
        s: &[usize],
        a: &[usize],
        rng: &mut SimRng,
    ) -> Result<(Vec<f64>, Option<Vec<usize>>)> {
        let si = self.mg.encode_state(s)?;
        let ai = self.mg.encode_action(a)?;
        let rewards = self.mg.rewards(si, ai).to_vec();
        let u: f64 = rng.random();
        let next = self.mg.next_states(si, ai);
        let mut acc = 0.0;
        let mut ns = next.last().map(|&(n, _)| n).unwrap_or(si);
        for &(n, p) in next {
            acc += p;
            if u < acc {
                ns = n;
                break;
            }
        }
        if self.mg.is_terminal(ns) {
            Ok((rewards, None))
        } else {
            Ok((rewards, Some(self.mg.decode_state(ns))))
        }
    }

    fn performance(&self, policy: &PolicyFn<'_>) -> Result<f64> {
        Ok(evaluate(&self.mg, None, &self.factored(policy)?)?.j)
    }

    fn critic_oracle(&self, policy: &PolicyFn<'_>, features: &FeatureMap) -> Result<Option<Vec<f64>>> {
        let sol = solve_mspbe(&self.mg, None, &self.factored(policy)?, features)?;
        Ok(Some(sol.omega))
    }
}

impl CosineToyMG {
    /// Rows spanning the single live state: every joint action for small
    /// `N`, a fixed random sample otherwise.
    pub fn support_rows(&self) -> Vec<Row> {
        let n = self.n_agents();
        let s = self.state_locals();
        if n < usize::BITS as usize && (1usize << n) <= ENUMERATE_ROWS {
            return (0..1usize << n)
                .map(|c| (s.clone(), (0..n).map(|i| (c >> i) & 1).collect()))
                .collect();
        }
        let mut rng = seeded(0);
        (0..ENUMERATE_ROWS)
            .map(|_| (s.clone(), (0..n).map(|_| rng.random_range(0..2)).collect()))
            .collect()
    }

    /// Closed-form projected Bellman fixed point when agent `i` plays 1
    /// with probability `p_one[i]`, independently: actions are independent
    /// Bernoulli indicators, so `E[φφᵀ]`, `E[φ]` and `E[φ r]` are exact
    /// products of per-agent moments.
    pub fn mspbe_closed_form(&self, p_one: &[f64], features: &FeatureMap) -> Result<Vec<f64>> {
        let n = self.n_agents();
        if p_one.len() != n || features.raw_dim() != 3 * n {
            return Err(Error::Dimension(
                "closed-form oracle needs one probability per agent and 3N raw features".into(),
            ));
        }
        let s = self.values();
        let w = self.reward_weights();
        let mean: Vec<f64> = (0..n)
            .flat_map(|i| [s[i], 1.0 - p_one[i], p_one[i]])
            .collect();
        // second moments within one agent's block
        let block = |i: usize, u: usize, v: usize| -> f64 {
            let p = p_one[i];
            match (u, v) {
                (0, 0) => s[i] * s[i],
                (0, 1) | (1, 0) => s[i] * (1.0 - p),
                (0, 2) | (2, 0) => s[i] * p,
                (1, 1) => 1.0 - p,
                (2, 2) => p,
                _ => 0.0,
            }
        };
        let gamma = match self.mode() {
            CosineMode::OneStep => 0.0,
            CosineMode::Repeated => self.discount(),
        };
        let kept = features.kept_columns();
        let k = kept.len();
        let mut a = DMatrix::<f64>::zeros(k, k);
        let mut b = DVector::<f64>::zeros(k);
        for (r, &cu) in kept.iter().enumerate() {
            let (iu, u) = (cu / 3, cu % 3);
            for (c, &cv) in kept.iter().enumerate() {
                let (iv, v) = (cv / 3, cv % 3);
                let second = if iu == iv { block(iu, u, v) } else { mean[cu] * mean[cv] };
                a[(r, c)] = second - gamma * mean[cu] * mean[cv];
            }
            // E[φ_u r] with r = Σ_j w_j 1[a^j = 1]
            b[r] = (0..n)
                .map(|j| {
                    let joint = if j == iu { block(iu, u, 2) } else { mean[cu] * p_one[j] };
                    w[j] * joint
                })
                .sum();
        }
        let omega = linalg::solve(&a, &b, "closed-form projected Bellman fixed point")?;
        Ok(omega.iter().copied().collect())
    }

    fn p_one(&self, policy: &PolicyFn<'_>) -> Vec<f64> {
        let s = self.state_locals();
        (0..self.n_agents()).map(|i| policy(&s, i)[1]).collect()
    }
}

/// Actor features are the agent's own value and a bias.
impl ActorCriticGame for CosineToyMG {
    fn n_agents(&self) -> usize {
        CosineToyMG::n_agents(self)
    }

    fn n_actions(&self) -> usize {
        2
    }

    fn discount(&self) -> f64 {
        CosineToyMG::discount(self)
    }

    fn actor_dim(&self) -> usize {
        2
    }

    fn actor_features(&self, s: &[usize], agent: usize) -> Vec<f64> {
        vec![self.values().get(s[agent]).copied().unwrap_or(0.0), 1.0]
    }

    fn critic_features(&self) -> Result<FeatureMap> {
        CosineToyMG::critic_features(self).reduce(&self.support_rows())
    }

    fn reset(&self, _rng: &mut SimRng) -> Vec<usize> {
        self.state_locals()
    }

    fn step(
        &self,
        s: &[usize],
        a: &[usize],
        _rng: &mut SimRng,
    ) -> Result<(Vec<f64>, Option<Vec<usize>>)> {
        if a.len() != CosineToyMG::n_agents(self) {
            return Err(Error::Dimension(format!(
                "{} actions for {} agents",
                a.len(),
                CosineToyMG::n_agents(self)
            )));
        }
        let r = self.reward(a);
        let next = match self.mode() {
            CosineMode::OneStep => None,
            CosineMode::Repeated => Some(s.to_vec()),
        };
        Ok((vec![r; a.len()], next))
    }

    /// Expected per-step team reward; the optimum is +1 in both modes.
    fn performance(&self, policy: &PolicyFn<'_>) -> Result<f64> {
        Ok(self.expected_reward(&self.p_one(policy)))
    }

    fn critic_oracle(&self, policy: &PolicyFn<'_>, features: &FeatureMap) -> Result<Option<Vec<f64>>> {
        Ok(Some(self.mspbe_closed_form(&self.p_one(policy), features)?))
    }
}
