use std::io::Write;
use std::path::Path;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::agent::{
    actor_loss_and_grads, td_loss_and_grads, td_selection, ActorSample, AgentNets, CommMode, TdSample, Team,
};
use super::gate::{GateConfig, GateMode};
use super::memory::{ReplayMemory, Transition};
use super::topology::{MessageCounters, Topology};
use crate::bandit::{EpisodeSchedule, Scheduler, SchedulerConfig, SchedulerKind};
use crate::envs::{ParticleNav, ParticleNavConfig};
use crate::error::{Error, Result};
use crate::nets::{save_params, Adam, AdamConfig};
use crate::rng::{derive, SimRng};

const INIT_STREAM: u64 = 0;
const ENV_STREAM: u64 = 1;
const EXPLORE_STREAM: u64 = 2;
const GATE_STREAM: u64 = 3;
const MEMORY_STREAM: u64 = 4;
const SCHEDULER_STREAM: u64 = 5;
const EVAL_GATE_STREAM: u64 = 6;
/// Evaluation episode `e` resets the world from stream `EVAL_ENV_BASE + e`.
const EVAL_ENV_BASE: u64 = 1 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeepConfig {
    pub env: ParticleNavConfig,
    pub episodes: usize,
    pub hidden: usize,
    pub batch: usize,
    /// Critic and actor steps per agent after each episode.
    pub updates_per_episode: usize,
    pub memory_capacity: usize,
    pub gamma: f64,
    pub gate: GateConfig,
    pub comm: CommMode,
    pub scheduler: SchedulerConfig,
    pub critic_lr: f64,
    pub actor_lr: f64,
    pub gate_lr: f64,
    pub target_rate: f64,
    /// Exploration noise starts at `noise_std`, shrinks by `noise_decay`
    /// per episode and stops at `noise_floor`.
    pub noise_std: f64,
    pub noise_decay: f64,
    pub noise_floor: f64,
    pub eval_every: usize,
    pub eval_episodes: usize,
}

impl Default for DeepConfig {
    fn default() -> Self {
        Self {
            env: ParticleNavConfig::default(),
            episodes: 1000,
            hidden: 32,
            batch: 32,
            updates_per_episode: 8,
            memory_capacity: 50_000,
            gamma: 0.95,
            gate: GateConfig::default(),
            comm: CommMode::Learned,
            scheduler: SchedulerConfig::default(),
            critic_lr: 0.01,
            actor_lr: 0.01,
            gate_lr: 0.001,
            target_rate: 0.01,
            noise_std: 0.1,
            noise_decay: 0.995,
            noise_floor: 0.01,
            eval_every: 100,
            eval_episodes: 10,
        }
    }
}

impl DeepConfig {
    /// The method a scheduler name stands for: the gated, bandit-scheduled
    /// algorithm (`bandit`), its rule-based ablation (`rule`), random
    /// sharing at the gate rate (`random`), all-to-all communication
    /// (`full`), or independent learners (`none`).
    pub fn method(kind: SchedulerKind, eta: f64) -> Self {
        let mut cfg = Self::default();
        cfg.gate.eta = eta;
        cfg.scheduler = SchedulerConfig::of_kind(kind);
        cfg.comm = match kind {
            SchedulerKind::Bandit | SchedulerKind::Rule => CommMode::Learned,
            SchedulerKind::Random => CommMode::Random,
            SchedulerKind::Full => CommMode::All,
            SchedulerKind::None => CommMode::None,
        };
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.gate.validate()?;
        if self.episodes == 0 || self.hidden == 0 || self.batch == 0 || self.eval_every == 0 {
            return Err(Error::InvalidParam("episodes, hidden width, batch and eval cadence must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.target_rate) {
            return Err(Error::InvalidParam(format!(
                "discount {} must lie in [0, 1) and target rate {} in [0, 1]",
                self.gamma, self.target_rate
            )));
        }
        Ok(())
    }

    pub fn noise_at(&self, episode: usize) -> f64 {
        (self.noise_std * self.noise_decay.powi(episode as i32)).max(self.noise_floor)
    }
}

/// Random streams of one run.
pub struct RunRngs {
    pub env: SimRng,
    pub explore: SimRng,
    pub gate: SimRng,
    pub memory: SimRng,
    pub scheduler: SimRng,
}

impl RunRngs {
    pub fn new(seed: u64) -> Self {
        Self {
            env: derive(seed, ENV_STREAM),
            explore: derive(seed, EXPLORE_STREAM),
            gate: derive(seed, GATE_STREAM),
            memory: derive(seed, MEMORY_STREAM),
            scheduler: derive(seed, SCHEDULER_STREAM),
        }
    }
}

/// What one episode did.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeStats {
    /// `G ← r_t + γ G` over the episode, with `r_t` the team-mean reward.
    pub g: f64,
    /// Undiscounted sum of team-mean rewards.
    pub ret: f64,
    pub obs_msgs: u64,
    pub param_msgs: u64,
    /// Open gates and gate decisions per neighbor rank.
    pub opened: Vec<u64>,
    pub decided: Vec<u64>,
    pub schedule: EpisodeSchedule,
}

impl EpisodeStats {
    pub fn open_by_rank(&self) -> Vec<f64> {
        self.opened
            .iter()
            .zip(&self.decided)
            .map(|(&o, &d)| if d == 0 { 0.0 } else { o as f64 / d as f64 })
            .collect()
    }

    pub fn open_rate(&self) -> f64 {
        let d: u64 = self.decided.iter().sum();
        if d == 0 {
            0.0
        } else {
            self.opened.iter().sum::<u64>() as f64 / d as f64
        }
    }
}

/// Runs one episode: parameter consensus first (when a scheduler is
/// given), then `T` steps with exploration noise of scale `noise`. Every
/// open gate counts one observation-action message per step.
pub fn run_episode(
    cfg: &DeepConfig,
    world: &mut ParticleNav,
    team: &mut Team,
    scheduler: Option<&mut Scheduler>,
    memory: Option<&mut ReplayMemory>,
    noise: f64,
    rngs: &mut RunRngs,
) -> Result<EpisodeStats> {
    let topology = Topology { k: cfg.env.k };
    let schedule = match scheduler {
        Some(s) => s.schedule_episode(team, &mut rngs.scheduler)?,
        None => EpisodeSchedule::default(),
    };
    let n = cfg.env.n_agents;
    let k = topology.k.min(n - 1);
    let mut stats = EpisodeStats {
        g: 0.0,
        ret: 0.0,
        obs_msgs: 0,
        param_msgs: schedule.param_msgs as u64,
        opened: vec![0; k],
        decided: vec![0; k],
        schedule,
    };
    let normal = Normal::new(0.0, noise.max(0.0)).map_err(|e| Error::InvalidParam(e.to_string()))?;
    let mut memory = memory;
    let mut obs = world.reset_with(&mut rngs.env);
    let mut neighbors = topology.neighbors(world);
    loop {
        let mut actions = Vec::with_capacity(n);
        for i in 0..n {
            let agent = &team.agents[i];
            let open = agent.select(&cfg.env, &obs[i], neighbors[i].len(), cfg.comm, &cfg.gate, &mut rngs.gate)?;
            for (r, o) in open.iter().enumerate() {
                stats.decided[r] += 1;
                if *o {
                    stats.opened[r] += 1;
                    stats.obs_msgs += 1;
                }
            }
            let mut a = agent.act(&obs[i])?;
            if noise > 0.0 {
                for x in &mut a {
                    *x = (*x + normal.sample(&mut rngs.explore)).clamp(-1.0, 1.0);
                }
            }
            actions.push(a);
        }
        let step = world.step(&actions)?;
        let next_neighbors = topology.neighbors(world);
        let r = step.rewards.iter().sum::<f64>() / n as f64;
        stats.g = r + cfg.gamma * stats.g;
        stats.ret += r;
        if let Some(m) = memory.as_deref_mut() {
            m.push(Transition {
                obs: obs.clone(),
                actions: actions.clone(),
                rewards: step.rewards.clone(),
                next_obs: step.observations.clone(),
                neighbors: neighbors.clone(),
                next_neighbors: next_neighbors.clone(),
            })?;
        }
        obs = step.observations;
        neighbors = next_neighbors;
        if step.done {
            break;
        }
    }
    Ok(stats)
}

/// Greedy evaluation over fixed world layouts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub mean: f64,
    pub std: f64,
    pub open_rate: f64,
    pub open_by_rank: Vec<f64>,
}

/// Runs `episodes` noise-free episodes whose layouts depend only on `seed`.
pub fn evaluate_team(cfg: &DeepConfig, team: &mut Team, seed: u64, episodes: usize) -> Result<EvalSummary> {
    let mut world = ParticleNav::new(cfg.env.clone())?;
    let mut rngs = RunRngs::new(seed);
    rngs.gate = derive(seed, EVAL_GATE_STREAM);
    let mut returns = Vec::with_capacity(episodes);
    let k = cfg.env.k.min(cfg.env.n_agents - 1);
    let (mut opened, mut decided) = (vec![0u64; k], vec![0u64; k]);
    for e in 0..episodes {
        rngs.env = derive(seed, EVAL_ENV_BASE + e as u64);
        let s = run_episode(cfg, &mut world, team, None, None, 0.0, &mut rngs)?;
        returns.push(s.ret);
        for r in 0..k {
            opened[r] += s.opened[r];
            decided[r] += s.decided[r];
        }
    }
    let (mean, std) = crate::bandit::mean_std(&returns);
    let total: u64 = decided.iter().sum();
    Ok(EvalSummary {
        mean,
        std,
        open_rate: if total == 0 {
            0.0
        } else {
            opened.iter().sum::<u64>() as f64 / total as f64
        },
        open_by_rank: opened
            .iter()
            .zip(&decided)
            .map(|(&o, &d)| if d == 0 { 0.0 } else { o as f64 / d as f64 })
            .collect(),
    })
}

/// One row of the per-episode log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub seed: u64,
    pub episode: usize,
    pub ret: f64,
    pub obs_msgs: u64,
    pub param_msgs: u64,
    pub open_by_rank: Vec<f64>,
    /// Mean over agents; empty cell without a scheduler.
    pub p_communicate: Option<f64>,
    pub critic_loss: Option<f64>,
    pub eval: Option<EvalSummary>,
}

/// One agent's bandit decision and shaped rewards in one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditRow {
    pub seed: u64,
    pub episode: usize,
    pub agent: usize,
    pub x1: usize,
    pub x2: Option<usize>,
    pub r1: f64,
    pub r2: Option<f64>,
    pub p_communicate: f64,
}

#[derive(Debug, Clone)]
pub struct DeepOutcome {
    pub records: Vec<EpisodeRecord>,
    pub bandit_log: Vec<BanditRow>,
    pub team: Team,
    pub counters: MessageCounters,
    pub final_eval: EvalSummary,
}

struct Optimisers {
    critic: Adam,
    actor: Adam,
    gate: Adam,
}

fn update_team(
    cfg: &DeepConfig,
    team: &mut Team,
    opts: &mut [Optimisers],
    memory: &ReplayMemory,
    rngs: &mut RunRngs,
) -> Result<f64> {
    let n = team.agents.len();
    let mut critic_loss = 0.0;
    for i in 0..n {
        let batch = memory.sample(cfg.batch, &mut rngs.memory)?;
        let agent = &team.agents[i];
        let samples: Vec<TdSample> = batch
            .iter()
            .map(|tr| {
                Ok(TdSample {
                    tr,
                    target: agent.td_target(i, &cfg.env, tr, cfg.comm, &cfg.gate, cfg.gamma, &mut rngs.gate)?,
                    selection: td_selection(i, tr, cfg.comm, &cfg.gate, &mut rngs.gate),
                })
            })
            .collect::<Result<_>>()?;
        let out = td_loss_and_grads(i, agent, &cfg.env, &samples, &cfg.gate, GateMode::StraightThrough)?;
        critic_loss += out.loss / n as f64;
        let agent = &mut team.agents[i];
        let mut p = agent.critic.params();
        opts[i].critic.step(&mut p, &out.critic_grads)?;
        agent.critic.set_params(&p)?;
        if cfg.comm == CommMode::Learned {
            let mut p = agent.gate.params();
            opts[i].gate.step(&mut p, &out.gate_grads)?;
            agent.gate.set_params(&p)?;
        }
    }
    for i in 0..n {
        let batch = memory.sample(cfg.batch, &mut rngs.memory)?;
        let agent = &team.agents[i];
        let samples: Vec<ActorSample> = batch
            .iter()
            .map(|tr| {
                Ok(ActorSample {
                    tr,
                    open: agent.select(&cfg.env, &tr.obs[i], tr.neighbors[i].len(), cfg.comm, &cfg.gate, &mut rngs.gate)?,
                })
            })
            .collect::<Result<_>>()?;
        let (_, grads) = actor_loss_and_grads(i, agent, &samples)?;
        let agent = &mut team.agents[i];
        let mut p = agent.actor.params();
        opts[i].actor.step(&mut p, &grads)?;
        agent.actor.set_params(&p)?;
    }
    for a in &mut team.agents {
        a.soft_update(cfg.target_rate)?;
    }
    Ok(critic_loss)
}

/// Trains a team from scratch. Everything random flows from `seed`.
pub fn train_deep(cfg: &DeepConfig, seed: u64) -> Result<DeepOutcome> {
    cfg.validate()?;
    let obs_dim = cfg.env.obs_dim();
    let mut init = derive(seed, INIT_STREAM);
    let mut team = Team {
        agents: (0..cfg.env.n_agents)
            .map(|_| AgentNets::new(obs_dim, cfg.hidden, &mut init))
            .collect::<Result<_>>()?,
    };
    let mut opts: Vec<Optimisers> = team
        .agents
        .iter()
        .map(|a| Optimisers {
            critic: Adam::new(AdamConfig::with_lr(cfg.critic_lr), a.critic.n_params()),
            actor: Adam::new(AdamConfig::with_lr(cfg.actor_lr), a.actor.n_params()),
            gate: Adam::new(AdamConfig::with_lr(cfg.gate_lr), a.gate.n_params()),
        })
        .collect();
    let mut scheduler = Scheduler::new(&cfg.scheduler, cfg.env.n_agents)?;
    let mut memory = ReplayMemory::new(cfg.memory_capacity)?;
    let mut world = ParticleNav::new(cfg.env.clone())?;
    let mut rngs = RunRngs::new(seed);
    let mut counters = MessageCounters::default();
    let mut records = Vec::with_capacity(cfg.episodes);
    let mut bandit_log = Vec::new();
    let mut final_eval = None;
    for m in 0..cfg.episodes {
        let stats = run_episode(
            cfg,
            &mut world,
            &mut team,
            Some(&mut scheduler),
            Some(&mut memory),
            cfg.noise_at(m),
            &mut rngs,
        )?;
        counters.add_obs(stats.obs_msgs, obs_dim);
        counters.add_params(stats.param_msgs, team.consensus_size(0));
        let mut critic_loss = None;
        if memory.len() > cfg.batch {
            let mut total = 0.0;
            for _ in 0..cfg.updates_per_episode {
                total += update_team(cfg, &mut team, &mut opts, &memory, &mut rngs)?;
            }
            critic_loss = Some(total / cfg.updates_per_episode.max(1) as f64);
            let feedback = scheduler.feedback(&stats.schedule, stats.g)?;
            let probs = scheduler.p_communicate();
            for (d, f) in stats.schedule.decisions.iter().zip(&feedback) {
                bandit_log.push(BanditRow {
                    seed,
                    episode: m,
                    agent: d.agent,
                    x1: d.x1,
                    x2: d.x2,
                    r1: f.r1,
                    r2: f.r2,
                    p_communicate: probs[d.agent],
                });
            }
        }
        let last = m + 1 == cfg.episodes;
        let eval = if (m + 1) % cfg.eval_every == 0 || last {
            let e = evaluate_team(cfg, &mut team, seed, cfg.eval_episodes)?;
            if last {
                final_eval = Some(e.clone());
            }
            Some(e)
        } else {
            None
        };
        let probs = scheduler.p_communicate();
        records.push(EpisodeRecord {
            seed,
            episode: m,
            ret: stats.ret,
            obs_msgs: stats.obs_msgs,
            param_msgs: stats.param_msgs,
            open_by_rank: stats.open_by_rank(),
            p_communicate: (!probs.is_empty()).then(|| probs.iter().sum::<f64>() / probs.len() as f64),
            critic_loss,
            eval,
        });
    }
    Ok(DeepOutcome {
        records,
        bandit_log,
        team,
        counters,
        final_eval: final_eval.expect("at least one episode"),
    })
}

fn opt_cell(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Per-episode CSV: `seed, episode, return, obs_msgs, param_msgs`, one
/// `gate_open_r{rank}` column per neighbor rank, then `p_communicate,
/// critic_loss, eval_return, eval_std, eval_open_rate`.
pub fn write_episode_csv<W: Write>(out: W, records: &[EpisodeRecord], k: usize) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["seed", "episode", "return", "obs_msgs", "param_msgs"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((0..k).map(|r| format!("gate_open_r{r}")));
    header.extend(
        ["p_communicate", "critic_loss", "eval_return", "eval_std", "eval_open_rate"]
            .iter()
            .map(|s| s.to_string()),
    );
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![
            r.seed.to_string(),
            r.episode.to_string(),
            r.ret.to_string(),
            r.obs_msgs.to_string(),
            r.param_msgs.to_string(),
        ];
        row.extend((0..k).map(|q| r.open_by_rank.get(q).map(|v| v.to_string()).unwrap_or_default()));
        row.push(opt_cell(r.p_communicate));
        row.push(opt_cell(r.critic_loss));
        row.push(opt_cell(r.eval.as_ref().map(|e| e.mean)));
        row.push(opt_cell(r.eval.as_ref().map(|e| e.std)));
        row.push(opt_cell(r.eval.as_ref().map(|e| e.open_rate)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Bandit CSV: `seed, episode, agent, x1, x2, r1, r2, p_communicate`.
pub fn write_bandit_csv<W: Write>(out: W, rows: &[BanditRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["seed", "episode", "agent", "x1", "x2", "r1", "r2", "p_communicate"])?;
    for r in rows {
        w.write_record([
            r.seed.to_string(),
            r.episode.to_string(),
            r.agent.to_string(),
            r.x1.to_string(),
            r.x2.map(|v| v.to_string()).unwrap_or_default(),
            r.r1.to_string(),
            opt_cell(r.r2),
            r.p_communicate.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Saves every agent's online networks as `agent{i}_{gate,critic,actor}`.
pub fn save_team(dir: &Path, team: &Team) -> Result<()> {
    for (i, a) in team.agents.iter().enumerate() {
        save_params(dir, &format!("agent{i}_gate"), &a.gate.params(), &a.gate.shapes("gate"))?;
        save_params(dir, &format!("agent{i}_critic"), &a.critic.params(), &a.critic.shapes("critic"))?;
        save_params(dir, &format!("agent{i}_actor"), &a.actor.params(), &a.actor.shapes("actor"))?;
    }
    Ok(())
}
