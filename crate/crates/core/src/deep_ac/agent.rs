use rand::Rng;
use serde::{Deserialize, Serialize};

use super::gate::{gate_noise, gate_value, open_prob, sample_gates, Gate, GateConfig, GateMode, OPEN};
use super::memory::Transition;
use crate::bandit::ParamPool;
use crate::envs::ParticleNavConfig;
use crate::error::{Error, Result};
use crate::nets::{Activation, DenseNet, Pooling, SetPoolNet};
use crate::rng::SimRng;

/// Which neighbors feed an agent's critic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommMode {
    /// Chosen by the trained gate.
    Learned,
    /// Every neighbor.
    All,
    /// Nobody; the critic sees only the agent itself.
    None,
    /// Each neighbor independently with probability `eta`.
    Random,
}

/// Critic input for one agent: observation, action, and a flag marking the
/// critic's owner.
pub fn critic_element(obs: &[f64], action: [f64; 2], is_self: bool) -> Vec<f64> {
    let mut e = Vec::with_capacity(obs.len() + 3);
    e.extend_from_slice(obs);
    e.extend_from_slice(&action);
    e.push(if is_self { 1.0 } else { 0.0 });
    e
}

/// Relative positions of the neighbors, read from the observation.
pub fn embeddings(cfg: &ParticleNavConfig, obs: &[f64], count: usize) -> Vec<[f64; 2]> {
    (0..count)
        .map(|r| {
            let b = cfg.neighbor_block(r);
            [obs[b.start], obs[b.start + 1]]
        })
        .collect()
}

/// One agent's networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentNets {
    pub gate: Gate,
    pub critic: SetPoolNet,
    pub actor: DenseNet,
    pub target_critic: SetPoolNet,
    pub target_actor: DenseNet,
}

impl AgentNets {
    pub fn new(obs_dim: usize, hidden: usize, rng: &mut SimRng) -> Result<Self> {
        let gate = Gate::new(obs_dim, hidden, rng)?;
        let encoder = DenseNet::new(&[obs_dim + 3, hidden, hidden], Activation::Relu, Activation::Relu, rng)?;
        let head = DenseNet::new(&[hidden, hidden, 1], Activation::Relu, Activation::Identity, rng)?;
        let critic = SetPoolNet::new(encoder, head, Pooling::Mean)?;
        let actor = DenseNet::new(&[obs_dim, hidden, hidden, 2], Activation::Relu, Activation::Tanh, rng)?;
        Ok(Self {
            gate,
            target_critic: critic.clone(),
            target_actor: actor.clone(),
            critic,
            actor,
        })
    }

    pub fn act(&self, obs: &[f64]) -> Result<[f64; 2]> {
        let a = self.actor.forward(obs)?;
        Ok([a[0], a[1]])
    }

    /// `target ← (1 - rate)·target + rate·online`.
    pub fn soft_update(&mut self, rate: f64) -> Result<()> {
        let mix = |t: Vec<f64>, o: Vec<f64>| -> Vec<f64> {
            t.iter().zip(&o).map(|(t, o)| (1.0 - rate) * t + rate * o).collect()
        };
        let c = mix(self.target_critic.params(), self.critic.params());
        self.target_critic.set_params(&c)?;
        let a = mix(self.target_actor.params(), self.actor.params());
        self.target_actor.set_params(&a)
    }

    /// Hard, gradient-free choice of neighbors to hear from.
    pub fn select(
        &self,
        cfg: &ParticleNavConfig,
        obs: &[f64],
        n_neighbors: usize,
        comm: CommMode,
        gate: &GateConfig,
        rng: &mut SimRng,
    ) -> Result<Vec<bool>> {
        Ok(match comm {
            CommMode::All => vec![true; n_neighbors],
            CommMode::None => vec![false; n_neighbors],
            CommMode::Random => (0..n_neighbors).map(|_| rng.random::<f64>() < gate.eta).collect(),
            CommMode::Learned => {
                let cache = self.gate.forward(obs, &embeddings(cfg, obs, n_neighbors))?;
                let noise = gate_noise(n_neighbors, rng);
                sample_gates(&cache.logits, &noise, gate.tau)?
                    .iter()
                    .map(|s| s.index == OPEN)
                    .collect()
            }
        })
    }

    /// `r_i + γ Q̄_i` at the next step, with target networks and a fresh
    /// neighbor selection. Neighbors' next actions come from this agent's
    /// own target actor.
    #[allow(clippy::too_many_arguments)]
    pub fn td_target(
        &self,
        agent: usize,
        cfg: &ParticleNavConfig,
        tr: &Transition,
        comm: CommMode,
        gate: &GateConfig,
        gamma: f64,
        rng: &mut SimRng,
    ) -> Result<f64> {
        let obs = &tr.next_obs[agent];
        let nbrs = &tr.next_neighbors[agent];
        let open = self.select(cfg, obs, nbrs.len(), comm, gate, rng)?;
        let mut elements = vec![critic_element(obs, act(&self.target_actor, obs)?, true)];
        for (&j, _) in nbrs.iter().zip(&open).filter(|(_, o)| **o) {
            let o = &tr.next_obs[j];
            elements.push(critic_element(o, act(&self.target_actor, o)?, false));
        }
        let q = self.target_critic.forward(&elements)?[0];
        Ok(tr.rewards[agent] + gamma * q)
    }
}

fn act(actor: &DenseNet, obs: &[f64]) -> Result<[f64; 2]> {
    let a = actor.forward(obs)?;
    Ok([a[0], a[1]])
}

/// How one TD sample picks its neighbors.
#[derive(Debug, Clone, PartialEq)]
pub enum Selection {
    /// Gate sampled with this noise (two draws per neighbor).
    Gate(Vec<[f64; 2]>),
    /// Fixed choice, no gate gradient.
    Fixed(Vec<bool>),
}

#[derive(Debug, Clone)]
pub struct TdSample<'a> {
    pub tr: &'a Transition,
    pub target: f64,
    pub selection: Selection,
}

/// Batch-mean losses and gradients of one agent's critic and gate.
#[derive(Debug, Clone, PartialEq)]
pub struct TdOutput {
    pub loss: f64,
    pub td: f64,
    pub regularizer: f64,
    pub critic_grads: Vec<f64>,
    pub gate_grads: Vec<f64>,
    /// Mean open probability over every gated neighbor in the batch.
    pub mean_open_prob: f64,
}

/// Squared TD error plus `α·|mean open probability - η|` per sample,
/// averaged over the batch. With a gate selection the one-hot sample
/// weights its neighbor inside the critic's mean pool, so the TD error also
/// reaches the gate through the relaxed sample.
pub fn td_loss_and_grads(
    agent: usize,
    nets: &AgentNets,
    cfg: &ParticleNavConfig,
    samples: &[TdSample],
    gate: &GateConfig,
    mode: GateMode,
) -> Result<TdOutput> {
    if samples.is_empty() {
        return Err(Error::InvalidParam("empty TD batch".into()));
    }
    let b = samples.len() as f64;
    let mut out = TdOutput {
        loss: 0.0,
        td: 0.0,
        regularizer: 0.0,
        critic_grads: vec![0.0; nets.critic.n_params()],
        gate_grads: vec![0.0; nets.gate.n_params()],
        mean_open_prob: 0.0,
    };
    let mut gated = 0usize;
    for s in samples {
        let tr = s.tr;
        let obs = &tr.obs[agent];
        let nbrs = &tr.neighbors[agent];
        let own = critic_element(obs, tr.actions[agent], true);
        match &s.selection {
            Selection::Fixed(open) => {
                let mut elements = vec![own];
                for (&j, _) in nbrs.iter().zip(open).filter(|(_, o)| **o) {
                    elements.push(critic_element(&tr.obs[j], tr.actions[j], false));
                }
                let cache = nets.critic.forward_cached(&elements, None)?;
                let err = cache.output()[0] - s.target;
                out.td += err * err / b;
                nets.critic.backward(&cache, &[2.0 * err / b], &mut out.critic_grads)?;
            }
            Selection::Gate(noise) => {
                let k = nbrs.len();
                let gcache = nets.gate.forward(obs, &embeddings(cfg, obs, k))?;
                let gs = sample_gates(&gcache.logits, noise, gate.tau)?;
                let mut elements = vec![own];
                let mut weights = vec![1.0];
                for (&j, g) in nbrs.iter().zip(&gs) {
                    elements.push(critic_element(&tr.obs[j], tr.actions[j], false));
                    weights.push(gate_value(g, mode));
                }
                let cache = nets.critic.forward_cached(&elements, Some(&weights))?;
                let err = cache.output()[0] - s.target;
                out.td += err * err / b;
                let (_, d_w) = nets.critic.backward(&cache, &[2.0 * err / b], &mut out.critic_grads)?;
                let probs = gcache.open_probs();
                gated += k;
                out.mean_open_prob += probs.iter().sum::<f64>();
                // rate regularizer and its gradient in the open probabilities
                let members: Vec<usize> = if gate.literal_regularizer {
                    (0..k).filter(|&j| gs[j].index == OPEN).collect()
                } else {
                    (0..k).collect()
                };
                let mut d_prob = vec![0.0; k];
                if members.is_empty() {
                    out.regularizer += gate.alpha * gate.eta / b;
                } else {
                    let m = members.iter().map(|&j| probs[j]).sum::<f64>() / members.len() as f64;
                    out.regularizer += gate.alpha * (m - gate.eta).abs() / b;
                    let slope = gate.alpha * sign(m - gate.eta) / members.len() as f64 / b;
                    for &j in &members {
                        d_prob[j] = slope;
                    }
                }
                let d_logits: Vec<[f64; 2]> = (0..k)
                    .map(|j| {
                        let mut dy = [0.0; 2];
                        dy[OPEN] = d_w[j + 1];
                        let st = gs[j].backward(&dy);
                        let p = probs[j];
                        let dp = d_prob[j] * p * (1.0 - p);
                        let mut d = [st[0], st[1]];
                        d[OPEN] += dp;
                        d[1 - OPEN] -= dp;
                        d
                    })
                    .collect();
                nets.gate.backward(&gcache, &d_logits, &mut out.gate_grads)?;
            }
        }
    }
    out.loss = out.td + out.regularizer;
    if gated > 0 {
        out.mean_open_prob /= gated as f64;
    }
    if !out.loss.is_finite() {
        return Err(Error::NonFinite(format!(
            "critic loss of agent {agent} (td {}, regularizer {})",
            out.td, out.regularizer
        )));
    }
    Ok(out)
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Draws the gate noise for a TD sample, or a fixed selection for
/// non-learned communication.
pub fn td_selection(
    agent: usize,
    tr: &Transition,
    comm: CommMode,
    gate: &GateConfig,
    rng: &mut SimRng,
) -> Selection {
    let k = tr.neighbors[agent].len();
    match comm {
        CommMode::Learned => Selection::Gate(gate_noise(k, rng)),
        CommMode::All => Selection::Fixed(vec![true; k]),
        CommMode::None => Selection::Fixed(vec![false; k]),
        CommMode::Random => Selection::Fixed((0..k).map(|_| rng.random::<f64>() < gate.eta).collect()),
    }
}

#[derive(Debug, Clone)]
pub struct ActorSample<'a> {
    pub tr: &'a Transition,
    /// Neighbors the critic hears from.
    pub open: Vec<bool>,
}

/// Batch mean of `-Q_i` with the agent's own action replaced by
/// `π_i(o_i)`, and its gradient in the actor parameters.
pub fn actor_loss_and_grads(agent: usize, nets: &AgentNets, samples: &[ActorSample]) -> Result<(f64, Vec<f64>)> {
    if samples.is_empty() {
        return Err(Error::InvalidParam("empty actor batch".into()));
    }
    let b = samples.len() as f64;
    let obs_dim = nets.actor.n_in();
    let mut loss = 0.0;
    let mut grads = vec![0.0; nets.actor.n_params()];
    let mut scratch = vec![0.0; nets.critic.n_params()];
    for s in samples {
        let tr = s.tr;
        let obs = &tr.obs[agent];
        let acache = nets.actor.forward_cached(obs)?;
        let a = acache.output();
        let mut elements = vec![critic_element(obs, [a[0], a[1]], true)];
        for (&j, _) in tr.neighbors[agent].iter().zip(&s.open).filter(|(_, o)| **o) {
            elements.push(critic_element(&tr.obs[j], tr.actions[j], false));
        }
        let cache = nets.critic.forward_cached(&elements, None)?;
        loss -= cache.output()[0] / b;
        let (d_elem, _) = nets.critic.backward(&cache, &[-1.0 / b], &mut scratch)?;
        let d_a = &d_elem[0][obs_dim..obs_dim + 2];
        nets.actor.backward(&acache, d_a, &mut grads)?;
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("actor loss of agent {agent}")));
    }
    Ok((loss, grads))
}

/// The team's networks, mixable by a consensus scheduler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Team {
    pub agents: Vec<AgentNets>,
}

impl Team {
    pub fn consensus_size(&self, i: usize) -> usize {
        self.agents[i].critic.n_params() + self.agents[i].actor.n_params()
    }
}

fn mean_of(vs: &[Vec<f64>]) -> Vec<f64> {
    let n = vs.len() as f64;
    (0..vs[0].len())
        .map(|k| vs.iter().map(|v| v[k]).sum::<f64>() / n)
        .collect()
}

impl ParamPool for Team {
    fn n_agents(&self) -> usize {
        self.agents.len()
    }

    fn critic_params(&self, i: usize) -> Vec<f64> {
        self.agents[i].critic.params()
    }

    fn average_pair(&mut self, i: usize, j: usize) -> Result<()> {
        if i == j || i >= self.agents.len() || j >= self.agents.len() {
            return Err(Error::InvalidParam(format!("consensus pair ({i}, {j})")));
        }
        let c = mean_of(&[self.agents[i].critic.params(), self.agents[j].critic.params()]);
        let a = mean_of(&[self.agents[i].actor.params(), self.agents[j].actor.params()]);
        for k in [i, j] {
            self.agents[k].critic.set_params(&c)?;
            self.agents[k].actor.set_params(&a)?;
        }
        Ok(())
    }

    fn average_all(&mut self) -> Result<()> {
        let c = mean_of(&self.agents.iter().map(|a| a.critic.params()).collect::<Vec<_>>());
        let a = mean_of(&self.agents.iter().map(|a| a.actor.params()).collect::<Vec<_>>());
        for ag in &mut self.agents {
            ag.critic.set_params(&c)?;
            ag.actor.set_params(&a)?;
        }
        Ok(())
    }
}

/// Probability that the gate of `agent` opens toward each neighbor, given
/// its observation.
pub fn open_probabilities(nets: &AgentNets, cfg: &ParticleNavConfig, obs: &[f64], k: usize) -> Result<Vec<f64>> {
    let cache = nets.gate.forward(obs, &embeddings(cfg, obs, k))?;
    Ok(cache.logits.iter().map(|l| open_prob(*l)).collect())
}
