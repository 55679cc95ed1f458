use serde::{Deserialize, Serialize};

use crate::consensus::{apply_consensus, ConsensusMatrix, StepSchedule};
use crate::error::{Error, Result};
use crate::nets::{Adam, AdamConfig};

/// Per-agent critic weights and softmax-linear actor parameters.
///
/// `thetas[i]` stores one row of `actor_dim` weights per local action, so
/// the logit of action `b` is `θ^i[b]ᵀ x` for observation features `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearACState {
    pub omegas: Vec<Vec<f64>>,
    pub thetas: Vec<Vec<f64>>,
    pub t: u64,
    n_actions: usize,
    actor_dim: usize,
}

impl LinearACState {
    pub fn new(n_agents: usize, critic_dim: usize, n_actions: usize, actor_dim: usize) -> Self {
        Self {
            omegas: vec![vec![0.0; critic_dim]; n_agents],
            thetas: vec![vec![0.0; n_actions * actor_dim]; n_agents],
            t: 0,
            n_actions,
            actor_dim,
        }
    }

    pub fn n_agents(&self) -> usize {
        self.omegas.len()
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn actor_dim(&self) -> usize {
        self.actor_dim
    }

    pub fn logits(&self, agent: usize, x: &[f64]) -> Vec<f64> {
        self.thetas[agent]
            .chunks(self.actor_dim)
            .map(|row| dot(row, x))
            .collect()
    }

    /// `π^i(· | x)`.
    pub fn policy(&self, agent: usize, x: &[f64]) -> Vec<f64> {
        softmax(&self.logits(agent, x))
    }

    /// `Q(s, a; ω^i) = φᵀ ω^i`.
    pub fn q(&self, agent: usize, phi: &[f64]) -> f64 {
        dot(&self.omegas[agent], phi)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// `∇_θ log π(b | x)` for the softmax-linear actor: `(e_b - π) ⊗ x`.
pub fn score(probs: &[f64], x: &[f64], action: usize) -> Vec<f64> {
    if probs[action] < f64::MIN_POSITIVE {
        log::warn!("sampled action {action} has underflowing probability; score is clamped");
    }
    let mut g = Vec::with_capacity(probs.len() * x.len());
    for (b, &p) in probs.iter().enumerate() {
        let coef = if b == action { 1.0 - p } else { -p };
        g.extend(x.iter().map(|xi| coef * xi));
    }
    g
}

/// `δ = r + γ φ_nextᵀ ω - φ_tᵀ ω`. Pass a zero `phi_next` at episode end.
pub fn td_error(omega: &[f64], phi_t: &[f64], phi_next: &[f64], r: f64, gamma: f64) -> Result<f64> {
    if omega.len() != phi_t.len() || omega.len() != phi_next.len() {
        return Err(Error::Dimension(format!(
            "critic of length {} with features of length {} and {}",
            omega.len(),
            phi_t.len(),
            phi_next.len()
        )));
    }
    Ok(r + gamma * dot(phi_next, omega) - dot(phi_t, omega))
}

/// One on-policy sample as seen by every agent.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    /// `φ(s_t, a_t)`.
    pub phi: Vec<f64>,
    /// `φ(s_{t+1}, a_{t+1})`, or zeros when the episode ended.
    pub phi_next: Vec<f64>,
    /// Local rewards `r^i_t`.
    pub rewards: Vec<f64>,
    /// Actor features `x^i(s_t)` per agent.
    pub actor_inputs: Vec<Vec<f64>>,
    /// Local actions `a^i_t`.
    pub actions: Vec<usize>,
    pub gamma: f64,
}

/// Local ascent steps for one parameter group, one optimiser per agent.
#[derive(Debug, Clone)]
pub struct Stepper {
    schedule: StepSchedule,
    adam: Vec<Adam>,
}

impl Stepper {
    pub fn new(schedule: StepSchedule, n_agents: usize, dim: usize) -> Result<Self> {
        schedule.validate()?;
        let adam = match schedule {
            StepSchedule::AdaptiveMoment {
                lr,
                beta1,
                beta2,
                eps,
            } => (0..n_agents)
                .map(|_| Adam::new(AdamConfig { lr, beta1, beta2, eps }, dim))
                .collect(),
            _ => Vec::new(),
        };
        Ok(Self { schedule, adam })
    }

    pub fn schedule(&self) -> &StepSchedule {
        &self.schedule
    }

    /// `params += β_t · direction`, or an adaptive-moment step along it.
    pub fn ascend(&mut self, agent: usize, t: u64, params: &mut [f64], direction: &[f64]) -> Result<()> {
        if self.adam.is_empty() {
            let beta = self.schedule.rate(t);
            for (p, d) in params.iter_mut().zip(direction) {
                *p += beta * d;
            }
            Ok(())
        } else {
            let grads: Vec<f64> = direction.iter().map(|d| -d).collect();
            self.adam[agent].step(params, &grads)
        }
    }
}

/// Local TD step `ω̃^i = ω^i + β δ^i φ(s_t, a_t)` for every agent, then
/// consensus. Returns the TD errors.
pub fn critic_step(
    state: &mut LinearACState,
    tr: &Transition,
    stepper: &mut Stepper,
    c: &ConsensusMatrix,
) -> Result<Vec<f64>> {
    let n = state.n_agents();
    if tr.rewards.len() != n {
        return Err(Error::Dimension(format!("{} rewards for {n} agents", tr.rewards.len())));
    }
    let mut deltas = Vec::with_capacity(n);
    for i in 0..n {
        let delta = td_error(&state.omegas[i], &tr.phi, &tr.phi_next, tr.rewards[i], tr.gamma)?;
        let dir: Vec<f64> = tr.phi.iter().map(|x| delta * x).collect();
        stepper.ascend(i, state.t, &mut state.omegas[i], &dir)?;
        deltas.push(delta);
    }
    state.omegas = apply_consensus(&state.omegas, c)?;
    Ok(deltas)
}

/// Local policy-gradient step weighted by the agent's own critic value,
/// `θ̃^i = θ^i + β Q(s_t, a_t; ω^i) ∇ log π^i(a^i_t | x^i)`, then consensus.
///
/// Uses the critic weights as they are on entry, so call it before
/// [`critic_step`] for the same sample.
pub fn actor_step(
    state: &mut LinearACState,
    tr: &Transition,
    stepper: &mut Stepper,
    c: &ConsensusMatrix,
) -> Result<()> {
    let n = state.n_agents();
    if tr.actor_inputs.len() != n || tr.actions.len() != n {
        return Err(Error::Dimension("actor inputs or actions do not match the agent count".into()));
    }
    for i in 0..n {
        let q = state.q(i, &tr.phi);
        let x = &tr.actor_inputs[i];
        let probs = state.policy(i, x);
        let dir: Vec<f64> = score(&probs, x, tr.actions[i]).into_iter().map(|g| q * g).collect();
        stepper.ascend(i, state.t, &mut state.thetas[i], &dir)?;
    }
    state.thetas = apply_consensus(&state.thetas, c)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn td_error_cases() {
        assert_eq!(td_error(&[0.0, 0.0], &[1.0, 2.0], &[3.0, 4.0], 0.7, 0.9).unwrap(), 0.7);
        let phi = [0.3, -1.2];
        assert!((td_error(&[2.0, 1.0], &phi, &phi, 0.4, 1.0).unwrap() - 0.4).abs() < 1e-15);
        // φ_tᵀω = 2, φ_nextᵀω = 1
        let d = td_error(&[1.0, 1.0], &[2.0, 0.0], &[0.0, 1.0], 1.0, 0.9).unwrap();
        assert!((d - (-0.1)).abs() < 1e-12);
        assert!(td_error(&[1.0], &[1.0, 2.0], &[1.0], 0.0, 0.9).is_err());
    }

    #[test]
    fn score_function_has_zero_mean() {
        let probs = softmax(&[0.3, -1.0, 2.0]);
        let x = [1.5, -0.5];
        let mut total = vec![0.0; 6];
        for (b, &p) in probs.iter().enumerate() {
            for (t, g) in total.iter_mut().zip(score(&probs, &x, b)) {
                *t += p * g;
            }
        }
        assert!(total.iter().all(|v| v.abs() < 1e-15));
    }

    fn transition(q_zero: bool) -> (LinearACState, Transition) {
        let mut s = LinearACState::new(2, 2, 2, 2);
        if !q_zero {
            s.omegas = vec![vec![1.0, 0.5], vec![-0.5, 2.0]];
        }
        s.thetas = vec![vec![0.1, 0.2, 0.3, 0.4], vec![-0.1, 0.0, 0.5, 0.5]];
        let tr = Transition {
            phi: vec![1.0, 0.0],
            phi_next: vec![0.0, 1.0],
            rewards: vec![1.0, 0.0],
            actor_inputs: vec![vec![1.0, 1.0], vec![0.5, 1.0]],
            actions: vec![0, 1],
            gamma: 0.9,
        };
        (s, tr)
    }

    #[test]
    fn zero_q_leaves_actor_unchanged() {
        let (mut s, tr) = transition(true);
        let before = s.thetas.clone();
        let mut st = Stepper::new(StepSchedule::Constant { value: 0.5 }, 2, 4).unwrap();
        actor_step(&mut s, &tr, &mut st, &ConsensusMatrix::identity(2)).unwrap();
        assert_eq!(s.thetas, before);
    }

    #[test]
    fn uniform_consensus_equals_mean_of_local_updates() {
        let (mut s, tr) = transition(false);
        let mut local = s.clone();
        let mut st = Stepper::new(StepSchedule::Constant { value: 0.1 }, 2, 2).unwrap();
        let mut st2 = st.clone();
        critic_step(&mut local, &tr, &mut st2, &ConsensusMatrix::identity(2)).unwrap();
        critic_step(&mut s, &tr, &mut st, &ConsensusMatrix::uniform(2)).unwrap();
        for k in 0..2 {
            let mean = 0.5 * (local.omegas[0][k] + local.omegas[1][k]);
            assert!((s.omegas[0][k] - mean).abs() < 1e-15);
            assert_eq!(s.omegas[0][k], s.omegas[1][k]);
        }
    }

    #[test]
    fn critic_step_matches_hand_computation() {
        let (mut s, tr) = transition(false);
        let mut st = Stepper::new(StepSchedule::Constant { value: 0.1 }, 2, 2).unwrap();
        let deltas = critic_step(&mut s, &tr, &mut st, &ConsensusMatrix::identity(2)).unwrap();
        // agent 0: δ = 1 + 0.9·0.5 - 1 = 0.45
        assert!((deltas[0] - 0.45).abs() < 1e-15);
        assert!((s.omegas[0][0] - (1.0 + 0.1 * 0.45)).abs() < 1e-15);
        assert_eq!(s.omegas[0][1], 0.5);
    }
}
