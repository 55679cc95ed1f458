use rand::Rng;
use serde::{Deserialize, Serialize};

use super::bilevel::{BiLevelBandit, Decision, Feedback, DEFAULT_WINDOW};
use super::exp3::Exp3Config;
use super::shaping::{COMMUNICATE, SKIP};
use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Agents whose parameters can be mixed.
pub trait ParamPool {
    fn n_agents(&self) -> usize;
    /// Flat critic parameters of agent `i`.
    fn critic_params(&self, i: usize) -> Vec<f64>;
    /// Replaces the critic and actor parameters of `i` and `j` by their
    /// average.
    fn average_pair(&mut self, i: usize, j: usize) -> Result<()>;
    /// Replaces every agent's critic and actor parameters by the mean.
    fn average_all(&mut self) -> Result<()>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchedulerKind {
    Bandit,
    Random,
    Rule,
    Full,
    None,
}

impl std::str::FromStr for SchedulerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bandit" => Ok(Self::Bandit),
            "random" => Ok(Self::Random),
            "rule" => Ok(Self::Rule),
            "full" => Ok(Self::Full),
            "none" => Ok(Self::None),
            other => Err(Error::Parse(format!(
                "unknown scheduler '{other}' (bandit, random, rule, full, none)"
            ))),
        }
    }
}

impl std::fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Self::Bandit => "bandit",
            Self::Random => "random",
            Self::Rule => "rule",
            Self::Full => "full",
            Self::None => "none",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchedulerConfig {
    pub kind: SchedulerKind,
    pub window: usize,
    pub exp3: Exp3Config,
    /// Per-agent consensus probability of the random and rule-based
    /// schedulers.
    pub frequency: f64,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            kind: SchedulerKind::Bandit,
            window: DEFAULT_WINDOW,
            exp3: Exp3Config::default(),
            frequency: 0.1,
        }
    }
}

impl SchedulerConfig {
    pub fn of_kind(kind: SchedulerKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }
}

/// The consensus performed before one episode.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSchedule {
    pub decisions: Vec<Decision>,
    /// Pairs in the order they were applied.
    pub exchanges: Vec<(usize, usize)>,
    pub param_msgs: usize,
}

/// `argmax_j ‖own - cache_j‖₁` over peers, lowest index on ties. Peers never
/// exchanged with score above every cached peer; with no cache at all the
/// partner is uniform.
pub fn rule_based_select(agent: usize, own: &[f64], caches: &[Option<Vec<f64>>], rng: &mut SimRng) -> usize {
    let peers: Vec<usize> = (0..caches.len()).filter(|&j| j != agent).collect();
    if peers.iter().all(|&j| caches[j].is_none()) {
        return peers[rng.random_range(0..peers.len())];
    }
    let score = |j: usize| match &caches[j] {
        Some(c) => own.iter().zip(c).map(|(a, b)| (a - b).abs()).sum(),
        None => f64::INFINITY,
    };
    let mut best = peers[0];
    let mut best_score = score(best);
    for &j in &peers[1..] {
        let s = score(j);
        if s > best_score {
            best = j;
            best_score = s;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Scheduler {
    Bandit(Vec<BiLevelBandit>),
    Random {
        n_agents: usize,
        frequency: f64,
    },
    Rule {
        frequency: f64,
        /// `caches[i][j]`: agent `i`'s copy of `j`'s critic from their last
        /// exchange.
        caches: Vec<Vec<Option<Vec<f64>>>>,
    },
    Full {
        n_agents: usize,
    },
    None,
}

impl Scheduler {
    pub fn new(config: &SchedulerConfig, n_agents: usize) -> Result<Self> {
        let needs_peers = !matches!(config.kind, SchedulerKind::None);
        if needs_peers && n_agents < 2 {
            return Err(Error::InvalidParam("parameter consensus needs two agents".into()));
        }
        if !(0.0..=1.0).contains(&config.frequency) {
            return Err(Error::InvalidParam(format!(
                "consensus frequency {} outside [0, 1]",
                config.frequency
            )));
        }
        Ok(match config.kind {
            SchedulerKind::Bandit => Self::Bandit(
                (0..n_agents)
                    .map(|i| BiLevelBandit::new(i, n_agents, config.window, config.exp3))
                    .collect::<Result<_>>()?,
            ),
            SchedulerKind::Random => Self::Random {
                n_agents,
                frequency: config.frequency,
            },
            SchedulerKind::Rule => Self::Rule {
                frequency: config.frequency,
                caches: vec![vec![None; n_agents]; n_agents],
            },
            SchedulerKind::Full => Self::Full { n_agents },
            SchedulerKind::None => Self::None,
        })
    }

    /// Decides and applies this episode's consensus. Agents act in index
    /// order and every pairwise exchange completes before the next one.
    pub fn schedule_episode(&mut self, pool: &mut dyn ParamPool, rng: &mut SimRng) -> Result<EpisodeSchedule> {
        let n = pool.n_agents();
        let mut out = EpisodeSchedule::default();
        match self {
            Self::None => {}
            Self::Full { n_agents } => {
                check_agents(*n_agents, n)?;
                pool.average_all()?;
                for i in 0..n {
                    for j in (0..n).filter(|&j| j != i) {
                        out.exchanges.push((i, j));
                    }
                }
            }
            Self::Bandit(bandits) => {
                check_agents(bandits.len(), n)?;
                for b in bandits.iter() {
                    let d = b.decide(rng);
                    if let Some(j) = d.x2 {
                        pool.average_pair(d.agent, j)?;
                        out.exchanges.push((d.agent, j));
                    }
                    out.decisions.push(d);
                }
            }
            Self::Random { n_agents, frequency } => {
                check_agents(*n_agents, n)?;
                for i in 0..n {
                    let d = if rng.random::<f64>() < *frequency {
                        let k = rng.random_range(0..n - 1);
                        let j = if k < i { k } else { k + 1 };
                        pool.average_pair(i, j)?;
                        out.exchanges.push((i, j));
                        Decision {
                            agent: i,
                            x1: COMMUNICATE,
                            x2: Some(j),
                        }
                    } else {
                        skip(i)
                    };
                    out.decisions.push(d);
                }
            }
            Self::Rule { frequency, caches } => {
                check_agents(caches.len(), n)?;
                for i in 0..n {
                    let d = if rng.random::<f64>() < *frequency {
                        let j = rule_based_select(i, &pool.critic_params(i), &caches[i], rng);
                        pool.average_pair(i, j)?;
                        caches[i][j] = Some(pool.critic_params(j));
                        out.exchanges.push((i, j));
                        Decision {
                            agent: i,
                            x1: COMMUNICATE,
                            x2: Some(j),
                        }
                    } else {
                        skip(i)
                    };
                    out.decisions.push(d);
                }
            }
        }
        out.param_msgs = out.exchanges.len();
        Ok(out)
    }

    /// Credits the episode's return `g`; only the bandit scheduler learns.
    pub fn feedback(&mut self, schedule: &EpisodeSchedule, g: f64) -> Result<Vec<Feedback>> {
        match self {
            Self::Bandit(bandits) => schedule
                .decisions
                .iter()
                .map(|d| {
                    let b = bandits
                        .get_mut(d.agent)
                        .ok_or_else(|| Error::InvalidParam(format!("no bandit for agent {}", d.agent)))?;
                    b.feedback(d, g)
                })
                .collect(),
            _ => Ok(Vec::new()),
        }
    }

    /// Per-agent probability of running consensus next episode.
    pub fn p_communicate(&self) -> Vec<f64> {
        match self {
            Self::Bandit(b) => b.iter().map(BiLevelBandit::p_communicate).collect(),
            Self::Random { n_agents, frequency } => vec![*frequency; *n_agents],
            Self::Rule { frequency, caches } => vec![*frequency; caches.len()],
            Self::Full { n_agents } => vec![1.0; *n_agents],
            Self::None => Vec::new(),
        }
    }
}

fn skip(agent: usize) -> Decision {
    Decision {
        agent,
        x1: SKIP,
        x2: None,
    }
}

fn check_agents(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Dimension(format!(
            "scheduler built for {expected} agents used with {got}"
        )));
    }
    Ok(())
}
