use std::io::Write;

use serde::{Deserialize, Serialize};

use super::agent::{actor_step, critic_step, LinearACState, Stepper, Transition};
use super::features::FeatureMap;
use super::game::{sample_categorical, ActorCriticGame};
use crate::consensus::{disagreement, ConsensusSpec, StepSchedule};
use crate::error::{Error, Result};
use crate::rng::{seeded, SimRng};

/// Critic norm beyond which training aborts.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinearACConfig {
    pub steps: u64,
    pub critic_schedule: StepSchedule,
    pub actor_schedule: StepSchedule,
    pub critic_consensus: ConsensusSpec,
    pub actor_consensus: ConsensusSpec,
    /// With `false` the policy stays at its (uniform) initialisation.
    pub train_actor: bool,
    pub eval_every: u64,
    /// Record the distance of the critics to the exact fixed point of the
    /// current policy at each evaluation.
    pub track_oracle: bool,
}

impl Default for LinearACConfig {
    fn default() -> Self {
        Self {
            steps: 50_000,
            critic_schedule: StepSchedule::critic_default(),
            actor_schedule: StepSchedule::actor_default(),
            critic_consensus: ConsensusSpec::Uniform,
            actor_consensus: ConsensusSpec::Uniform,
            train_actor: true,
            eval_every: 500,
            track_oracle: false,
        }
    }
}

/// One evaluation point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearRecord {
    pub seed: u64,
    pub step: u64,
    pub j: f64,
    pub omega_disagreement: f64,
    pub theta_disagreement: f64,
    /// `max_i ‖ω^i - ω_π‖`, empty when not tracked.
    pub omega_oracle_dist: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub records: Vec<LinearRecord>,
    pub state: LinearACState,
    pub features: FeatureMap,
}

impl TrainOutcome {
    pub fn final_j(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.j)
    }

    /// Mean of `J` over the evaluation points.
    pub fn auc(&self) -> f64 {
        auc(&self.records)
    }
}

pub fn auc(records: &[LinearRecord]) -> f64 {
    if records.is_empty() {
        return f64::NAN;
    }
    records.iter().map(|r| r.j).sum::<f64>() / records.len() as f64
}

fn actions_for(
    game: &dyn ActorCriticGame,
    state: &LinearACState,
    s: &[usize],
    rng: &mut SimRng,
) -> (Vec<Vec<f64>>, Vec<usize>) {
    let xs: Vec<Vec<f64>> = (0..game.n_agents()).map(|i| game.actor_features(s, i)).collect();
    let acts = xs
        .iter()
        .enumerate()
        .map(|(i, x)| sample_categorical(&state.policy(i, x), rng))
        .collect();
    (xs, acts)
}

/// Runs the consensus actor-critic on one seed.
///
/// Each step samples `a_t` from the current policy, observes rewards and
/// `s_{t+1}`, samples `a_{t+1}`, takes the actor step (with the critics as
/// they were) and the critic step, each followed by its own consensus
/// round. Episodes restart from `reset` when the game ends.
pub fn train<G: ActorCriticGame>(game: &G, config: &LinearACConfig, seed: u64) -> Result<TrainOutcome> {
    let n = game.n_agents();
    let features = game.critic_features()?;
    let k = features.dim();
    let mut state = LinearACState::new(n, k, game.n_actions(), game.actor_dim());
    let mut critic_opt = Stepper::new(config.critic_schedule, n, k)?;
    let mut actor_opt = Stepper::new(config.actor_schedule, n, game.n_actions() * game.actor_dim())?;
    let mut rng = seeded(seed);
    let gamma = game.discount();
    let eval_every = config.eval_every.max(1);
    let mut records = Vec::new();

    let mut s = game.reset(&mut rng);
    let (mut xs, mut acts) = actions_for(game, &state, &s, &mut rng);
    records.push(evaluate_point(game, &state, &features, config, seed)?);
    while state.t < config.steps {
        let (rewards, next) = game.step(&s, &acts, &mut rng)?;
        let phi = features.phi(&s, &acts)?;
        let (phi_next, carry) = match next {
            Some(ns) => {
                let (nxs, nacts) = actions_for(game, &state, &ns, &mut rng);
                (features.phi(&ns, &nacts)?, Some((ns, nxs, nacts)))
            }
            None => (vec![0.0; k], None),
        };
        let tr = Transition {
            phi,
            phi_next,
            rewards,
            actor_inputs: xs,
            actions: acts,
            gamma,
        };
        let c_omega = config.critic_consensus.sample(n, &mut rng);
        let c_theta = config.actor_consensus.sample(n, &mut rng);
        if config.train_actor {
            actor_step(&mut state, &tr, &mut actor_opt, &c_theta)?;
        }
        critic_step(&mut state, &tr, &mut critic_opt, &c_omega)?;
        state.t += 1;

        if let Some(i) = state
            .omegas
            .iter()
            .position(|w| w.iter().map(|x| x * x).sum::<f64>().sqrt() > DIVERGENCE_LIMIT)
        {
            return Err(Error::Diverged(format!(
                "critic of agent {i} exceeded norm {DIVERGENCE_LIMIT:e} at step {} \
                 (the stability condition of the critic does not hold)",
                state.t
            )));
        }

        (s, xs, acts) = match carry {
            Some(c) => c,
            None => {
                let ns = game.reset(&mut rng);
                let (nxs, nacts) = actions_for(game, &state, &ns, &mut rng);
                (ns, nxs, nacts)
            }
        };
        if state.t % eval_every == 0 || state.t == config.steps {
            records.push(evaluate_point(game, &state, &features, config, seed)?);
        }
    }
    Ok(TrainOutcome {
        records,
        state,
        features,
    })
}

fn evaluate_point<G: ActorCriticGame>(
    game: &G,
    state: &LinearACState,
    features: &FeatureMap,
    config: &LinearACConfig,
    seed: u64,
) -> Result<LinearRecord> {
    let policy = |s: &[usize], i: usize| state.policy(i, &game.actor_features(s, i));
    let j = game.performance(&policy)?;
    let omega_oracle_dist = if config.track_oracle {
        game.critic_oracle(&policy, features)?.map(|target| {
            state
                .omegas
                .iter()
                .map(|w| {
                    w.iter()
                        .zip(&target)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt()
                })
                .fold(0.0, f64::max)
        })
    } else {
        None
    };
    Ok(LinearRecord {
        seed,
        step: state.t,
        j,
        omega_disagreement: disagreement(&state.omegas).1,
        theta_disagreement: disagreement(&state.thetas).1,
        omega_oracle_dist,
    })
}

/// Writes records with the header
/// `seed,step,J,omega_disagreement,theta_disagreement,omega_oracle_dist`.
pub fn write_csv<W: Write>(out: W, records: &[LinearRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "seed",
        "step",
        "J",
        "omega_disagreement",
        "theta_disagreement",
        "omega_oracle_dist",
    ])?;
    for r in records {
        w.write_record([
            r.seed.to_string(),
            r.step.to_string(),
            r.j.to_string(),
            r.omega_disagreement.to_string(),
            r.theta_disagreement.to_string(),
            r.omega_oracle_dist.map(|d| d.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
