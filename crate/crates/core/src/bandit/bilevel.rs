use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::exp3::{Exp3, Exp3Config};
use super::shaping::{shape_reward, Level, COMMUNICATE, SKIP};
use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Default number of returns each record window keeps.
pub const DEFAULT_WINDOW: usize = 10;

/// One agent's choice for an episode: the high-level arm and, when it
/// communicates, the partner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub agent: usize,
    pub x1: usize,
    pub x2: Option<usize>,
}

impl Decision {
    pub fn communicates(&self) -> bool {
        self.x1 == COMMUNICATE
    }
}

/// Shaped rewards credited after an episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Feedback {
    pub r1: f64,
    pub r2: Option<f64>,
}

/// Per-agent two-level scheduler: a 2-arm bandit deciding whether to run
/// consensus this episode and an `(N-1)`-arm bandit choosing the partner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiLevelBandit {
    agent: usize,
    n_agents: usize,
    window: usize,
    high: Exp3,
    low: Exp3,
    high_records: VecDeque<(f64, usize)>,
    low_records: VecDeque<f64>,
}

impl BiLevelBandit {
    pub fn new(agent: usize, n_agents: usize, window: usize, config: Exp3Config) -> Result<Self> {
        if n_agents < 2 || agent >= n_agents {
            return Err(Error::InvalidParam(format!(
                "agent {agent} of {n_agents}: a partner bandit needs two agents"
            )));
        }
        if window == 0 {
            return Err(Error::InvalidParam("record window must be positive".into()));
        }
        Ok(Self {
            agent,
            n_agents,
            window,
            high: Exp3::new(2, config)?,
            low: Exp3::new(n_agents - 1, config)?,
            high_records: VecDeque::new(),
            low_records: VecDeque::new(),
        })
    }

    pub fn agent(&self) -> usize {
        self.agent
    }

    pub fn high(&self) -> &Exp3 {
        &self.high
    }

    pub fn low(&self) -> &Exp3 {
        &self.low
    }

    pub fn p_communicate(&self) -> f64 {
        self.high.probabilities()[COMMUNICATE]
    }

    /// Peer id of a low-level arm (arms skip the agent itself).
    pub fn peer(&self, arm: usize) -> usize {
        if arm < self.agent {
            arm
        } else {
            arm + 1
        }
    }

    fn arm_of(&self, peer: usize) -> usize {
        if peer < self.agent {
            peer
        } else {
            peer - 1
        }
    }

    pub fn decide(&self, rng: &mut SimRng) -> Decision {
        let x1 = self.high.sample(rng);
        let x2 = (x1 == COMMUNICATE).then(|| self.peer(self.low.sample(rng)));
        Decision {
            agent: self.agent,
            x1,
            x2,
        }
    }

    /// Records the episode's return and updates both levels; the low level
    /// only learns from episodes in which it was consulted.
    pub fn feedback(&mut self, decision: &Decision, g: f64) -> Result<Feedback> {
        if decision.agent != self.agent || decision.x1 > SKIP || decision.communicates() != decision.x2.is_some() {
            return Err(Error::InvalidParam(format!("decision {decision:?} for agent {}", self.agent)));
        }
        push_bounded(&mut self.high_records, (g, decision.x1), self.window);
        let (returns, arms): (Vec<f64>, Vec<usize>) = self.high_records.iter().cloned().unzip();
        let r1 = shape_reward(&returns, &arms, g, Level::High);
        self.high.update(decision.x1, r1)?;
        let r2 = match decision.x2 {
            Some(peer) => {
                push_bounded(&mut self.low_records, g, self.window);
                let returns: Vec<f64> = self.low_records.iter().cloned().collect();
                let r2 = shape_reward(&returns, &[], g, Level::Low);
                self.low.update(self.arm_of(peer), r2)?;
                Some(r2)
            }
            None => None,
        };
        Ok(Feedback { r1, r2 })
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }
}

fn push_bounded<T>(q: &mut VecDeque<T>, x: T, cap: usize) {
    q.push_back(x);
    while q.len() > cap {
        q.pop_front();
    }
}
