//! Plain-text game files.
//!
//! A game file is TOML. Local sets are either one list shared by every
//! agent or one list per agent. Transition entries are sparse: unlisted
//! entries are zero, and a row with no entries at all moves to
//! `default_next` when one is given. Terminal states are absorbing with
//! zero reward and need no rows. Observations are explicit per-state
//! tables, one per agent.
//!
//! ```toml
//! agents = 2
//! discount = 0.95
//! local_states = ["s", "done"]
//! local_actions = ["0", "1"]
//! terminal = [["done", "done"]]
//! default_next = ["done", "done"]
//!
//! [[initial]]
//! state = ["s", "s"]
//! prob = 1.0
//!
//! [[reward]]
//! state = ["s", "s"]
//! action = ["0", "1"]
//! values = [1.0, 1.0]
//!
//! [observations]
//! full_observability = false
//! space = ["s,s", "s,done", "done,s", "done,done"]
//! [[observations.agent]]
//! entries = [{ state = ["s", "s"], obs = "s,s" }, …]
//! ```

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{FiniteMG, Layout, ObservationMap};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LocalSets {
    Shared(Vec<String>),
    PerAgent(Vec<Vec<String>>),
}

impl LocalSets {
    fn expand(&self, n: usize) -> Result<Vec<Vec<String>>> {
        match self {
            Self::Shared(v) => Ok(vec![v.clone(); n]),
            Self::PerAgent(v) if v.len() == n => Ok(v.clone()),
            Self::PerAgent(v) => Err(Error::Dimension(format!(
                "{} per-agent local sets for {n} agents",
                v.len()
            ))),
        }
    }

    fn compact(sets: &[Vec<String>]) -> Self {
        if sets.iter().all(|s| s == &sets[0]) {
            Self::Shared(sets[0].clone())
        } else {
            Self::PerAgent(sets.to_vec())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialEntry {
    pub state: Vec<String>,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionEntry {
    pub state: Vec<String>,
    pub action: Vec<String>,
    pub next: Vec<String>,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardEntry {
    pub state: Vec<String>,
    pub action: Vec<String>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObsEntry {
    pub state: Vec<String>,
    pub obs: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentObservations {
    pub entries: Vec<ObsEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSection {
    #[serde(default)]
    pub full_observability: bool,
    pub space: Vec<String>,
    pub agent: Vec<AgentObservations>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameFile {
    #[serde(default = "default_version")]
    pub version: u32,
    #[serde(default)]
    pub name: Option<String>,
    pub agents: usize,
    pub discount: f64,
    pub local_states: LocalSets,
    pub local_actions: LocalSets,
    #[serde(default)]
    pub terminal: Vec<Vec<String>>,
    #[serde(default)]
    pub default_next: Option<Vec<String>>,
    pub initial: Vec<InitialEntry>,
    #[serde(default)]
    pub transition: Vec<TransitionEntry>,
    #[serde(default)]
    pub reward: Vec<RewardEntry>,
    pub observations: Option<ObservationSection>,
}

fn default_version() -> u32 {
    FORMAT_VERSION
}

struct Lookup {
    index: Vec<HashMap<String, usize>>,
}

impl Lookup {
    fn new(sets: &[Vec<String>]) -> Self {
        Self {
            index: sets
                .iter()
                .map(|s| s.iter().enumerate().map(|(k, l)| (l.clone(), k)).collect())
                .collect(),
        }
    }

    fn locals(&self, labels: &[String], what: &str) -> Result<Vec<usize>> {
        if labels.len() != self.index.len() {
            return Err(Error::Parse(format!(
                "{what} {labels:?} has {} components, expected {}",
                labels.len(),
                self.index.len()
            )));
        }
        labels
            .iter()
            .enumerate()
            .map(|(i, l)| {
                self.index[i]
                    .get(l)
                    .copied()
                    .ok_or_else(|| Error::Parse(format!("unknown {what} label '{l}' for agent {i}")))
            })
            .collect()
    }
}

impl GameFile {
    pub fn parse(text: &str) -> Result<Self> {
        let file: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if file.version != FORMAT_VERSION {
            return Err(Error::Parse(format!(
                "unsupported game file version {}",
                file.version
            )));
        }
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Builds the game and, when present, the observation map.
    pub fn build(&self) -> Result<(FiniteMG, Option<ObservationMap>)> {
        let layout = Layout {
            local_states: self.local_states.expand(self.agents)?,
            local_actions: self.local_actions.expand(self.agents)?,
        };
        let states = Lookup::new(&layout.local_states);
        let actions = Lookup::new(&layout.local_actions);
        let mut mg = FiniteMG::empty(layout, self.discount)?;

        for t in &self.terminal {
            let s = mg.encode_state(&states.locals(t, "terminal state")?)?;
            mg.set_terminal(s);
        }
        for e in &self.initial {
            let s = mg.encode_state(&states.locals(&e.state, "initial state")?)?;
            mg.set_initial(s, mg.initial()[s] + e.prob);
        }
        for e in &self.transition {
            let s = mg.encode_state(&states.locals(&e.state, "state")?)?;
            let a = mg.encode_action(&actions.locals(&e.action, "action")?)?;
            let ns = mg.encode_state(&states.locals(&e.next, "next state")?)?;
            mg.push_transition(s, a, ns, e.prob);
        }
        if let Some(d) = &self.default_next {
            let ns = mg.encode_state(&states.locals(d, "default next state")?)?;
            for s in 0..mg.n_states() {
                for a in 0..mg.n_joint_actions() {
                    if mg.next_states(s, a).is_empty() {
                        mg.push_transition(s, a, ns, 1.0);
                    }
                }
            }
        }
        for e in &self.reward {
            let s = mg.encode_state(&states.locals(&e.state, "state")?)?;
            let a = mg.encode_action(&actions.locals(&e.action, "action")?)?;
            if e.values.len() != self.agents {
                return Err(Error::Parse(format!(
                    "reward entry has {} values for {} agents",
                    e.values.len(),
                    self.agents
                )));
            }
            mg.set_rewards(s, a, &e.values);
        }
        mg.close_terminals();
        mg.validate()?;

        let obs = match &self.observations {
            None => None,
            Some(sec) => Some(build_observations(&mg, &states, sec)?),
        };
        Ok((mg, obs))
    }

    /// Serialises a game. Rows equal to a point mass on the most common
    /// next state are folded into `default_next`.
    pub fn from_game(name: Option<&str>, mg: &FiniteMG, obs: Option<&ObservationMap>) -> Self {
        let layout = mg.layout();
        let n = mg.n_agents();
        let mut counts: HashMap<usize, usize> = HashMap::new();
        for s in (0..mg.n_states()).filter(|&s| !mg.is_terminal(s)) {
            for a in 0..mg.n_joint_actions() {
                if let [(ns, p)] = mg.next_states(s, a) {
                    if *p == 1.0 {
                        *counts.entry(*ns).or_default() += 1;
                    }
                }
            }
        }
        let default = counts.into_iter().max_by_key(|&(s, c)| (c, usize::MAX - s)).map(|e| e.0);

        let mut transition = Vec::new();
        let mut reward = Vec::new();
        for s in (0..mg.n_states()).filter(|&s| !mg.is_terminal(s)) {
            for a in 0..mg.n_joint_actions() {
                let row = mg.next_states(s, a);
                let folded = matches!(row, [(ns, p)] if Some(*ns) == default && *p == 1.0);
                if !folded {
                    for &(ns, p) in row {
                        transition.push(TransitionEntry {
                            state: mg.state_labels(s),
                            action: mg.action_labels(a),
                            next: mg.state_labels(ns),
                            prob: p,
                        });
                    }
                }
                let r = mg.rewards(s, a);
                if r.iter().any(|&x| x != 0.0) {
                    reward.push(RewardEntry {
                        state: mg.state_labels(s),
                        action: mg.action_labels(a),
                        values: r.to_vec(),
                    });
                }
            }
        }

        let observations = obs.map(|o| ObservationSection {
            full_observability: o.full_observability(),
            space: o.space().to_vec(),
            agent: (0..n)
                .map(|i| AgentObservations {
                    entries: (0..mg.n_states())
                        .map(|s| ObsEntry {
                            state: mg.state_labels(s),
                            obs: o.label(i, s).to_string(),
                        })
                        .collect(),
                })
                .collect(),
        });

        Self {
            version: FORMAT_VERSION,
            name: name.map(str::to_string),
            agents: n,
            discount: mg.discount(),
            local_states: LocalSets::compact(&layout.local_states),
            local_actions: LocalSets::compact(&layout.local_actions),
            terminal: (0..mg.n_states())
                .filter(|&s| mg.is_terminal(s))
                .map(|s| mg.state_labels(s))
                .collect(),
            default_next: default.map(|s| mg.state_labels(s)),
            initial: mg
                .initial_support()
                .into_iter()
                .map(|s| InitialEntry {
                    state: mg.state_labels(s),
                    prob: mg.initial()[s],
                })
                .collect(),
            transition,
            reward,
            observations,
        }
    }
}

fn build_observations(
    mg: &FiniteMG,
    states: &Lookup,
    sec: &ObservationSection,
) -> Result<ObservationMap> {
    if sec.agent.len() != mg.n_agents() {
        return Err(Error::Parse(format!(
            "{} observation tables for {} agents",
            sec.agent.len(),
            mg.n_agents()
        )));
    }
    let space_index: HashMap<&str, usize> = sec
        .space
        .iter()
        .enumerate()
        .map(|(k, l)| (l.as_str(), k))
        .collect();
    let mut tables = Vec::with_capacity(mg.n_agents());
    for (i, agent) in sec.agent.iter().enumerate() {
        let mut table: Vec<Option<usize>> = vec![None; mg.n_states()];
        for e in &agent.entries {
            let s = mg.encode_state(&states.locals(&e.state, "observed state")?)?;
            let o = *space_index.get(e.obs.as_str()).ok_or_else(|| {
                Error::Parse(format!("agent {i}: observation '{}' not in the declared space", e.obs))
            })?;
            table[s] = Some(o);
        }
        let table = table
            .into_iter()
            .enumerate()
            .map(|(s, o)| {
                o.ok_or_else(|| {
                    Error::Parse(format!(
                        "agent {i}: no observation for state {}",
                        mg.state_labels(s).join(",")
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        tables.push(table);
    }
    ObservationMap::new(sec.space.clone(), tables, sec.full_observability)
}
