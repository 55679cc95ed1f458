use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mg_core::{FiniteMG, ObservationMap};

/// Per-row normalisation tolerance.
pub const ROW_TOL: f64 = 1e-12;

/// What each agent's table is indexed by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyInput {
    /// The joint state index.
    State,
    /// The agent's observation index.
    Observation,
}

/// Product policy `π(a|s) = Π_i π^i(a^i | x^i)`, where `x^i` is the joint
/// state or agent `i`'s observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactoredPolicy {
    input: PolicyInput,
    shared: bool,
    /// `tables[i][x][a^i]`
    tables: Vec<Vec<Vec<f64>>>,
}

impl FactoredPolicy {
    pub fn new(input: PolicyInput, tables: Vec<Vec<Vec<f64>>>, shared: bool) -> Result<Self> {
        if tables.is_empty() {
            return Err(Error::InvalidParam("policy needs at least one agent".into()));
        }
        for (i, t) in tables.iter().enumerate() {
            for (x, row) in t.iter().enumerate() {
                let sum: f64 = row.iter().sum();
                if row.is_empty()
                    || row.iter().any(|p| !p.is_finite() || *p < 0.0)
                    || (sum - 1.0).abs() > ROW_TOL
                {
                    return Err(Error::InvalidParam(format!(
                        "policy row of agent {i} at input {x} is not a distribution"
                    )));
                }
            }
        }
        if shared && tables.iter().any(|t| t != &tables[0]) {
            return Err(Error::InvalidParam(
                "shared policy tables are not identical".into(),
            ));
        }
        Ok(Self {
            input,
            shared,
            tables,
        })
    }

    pub fn state_based(tables: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        Self::new(PolicyInput::State, tables, false)
    }

    pub fn observation_based(tables: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        Self::new(PolicyInput::Observation, tables, false)
    }

    /// Every agent uses `table` (indexed by observation).
    pub fn shared(table: Vec<Vec<f64>>, n_agents: usize) -> Result<Self> {
        Self::new(PolicyInput::Observation, vec![table; n_agents], true)
    }

    /// Uniform over each agent's local actions, state-indexed.
    pub fn uniform(mg: &FiniteMG) -> Self {
        let tables = mg
            .layout()
            .local_actions
            .iter()
            .map(|acts| vec![vec![1.0 / acts.len() as f64; acts.len()]; mg.n_states()])
            .collect();
        Self {
            input: PolicyInput::State,
            shared: false,
            tables,
        }
    }

    /// Deterministic state-based policy playing `choice(s)` (a joint action
    /// index) in every state.
    pub fn deterministic<F: Fn(usize) -> usize>(mg: &FiniteMG, choice: F) -> Self {
        let n = mg.n_agents();
        let sizes: Vec<usize> = mg.layout().local_actions.iter().map(Vec::len).collect();
        let mut tables: Vec<Vec<Vec<f64>>> = sizes
            .iter()
            .map(|&k| vec![vec![0.0; k]; mg.n_states()])
            .collect();
        for s in 0..mg.n_states() {
            let a = mg.decode_action(choice(s));
            for i in 0..n {
                tables[i][s][a[i]] = 1.0;
            }
        }
        Self {
            input: PolicyInput::State,
            shared: false,
            tables,
        }
    }

    pub fn input(&self) -> PolicyInput {
        self.input
    }

    pub fn is_shared(&self) -> bool {
        self.shared
    }

    pub fn n_agents(&self) -> usize {
        self.tables.len()
    }

    pub fn tables(&self) -> &[Vec<Vec<f64>>] {
        &self.tables
    }

    /// Checks that the tables cover `mg` (and `obs` for observation input).
    pub fn check(&self, mg: &FiniteMG, obs: Option<&ObservationMap>) -> Result<()> {
        if self.n_agents() != mg.n_agents() {
            return Err(Error::Dimension(format!(
                "policy for {} agents, game has {}",
                self.n_agents(),
                mg.n_agents()
            )));
        }
        let rows = match self.input {
            PolicyInput::State => mg.n_states(),
            PolicyInput::Observation => {
                let o = obs.ok_or_else(|| {
                    Error::InvalidParam("observation-based policy needs an observation map".into())
                })?;
                o.space().len()
            }
        };
        for (i, t) in self.tables.iter().enumerate() {
            let k = mg.layout().local_actions[i].len();
            if t.len() != rows || t.iter().any(|r| r.len() != k) {
                return Err(Error::Dimension(format!(
                    "policy table of agent {i} must be {rows}x{k}"
                )));
            }
        }
        Ok(())
    }

    /// `π^i(· | x^i(s))`.
    pub fn local(&self, obs: Option<&ObservationMap>, agent: usize, s: usize) -> &[f64] {
        let x = match (self.input, obs) {
            (PolicyInput::State, _) => s,
            (PolicyInput::Observation, Some(o)) => o.observe(agent, s),
            (PolicyInput::Observation, None) => panic!("observation map required"),
        };
        &self.tables[agent][x]
    }

    /// Joint action distribution in state `s`, indexed like `mg` actions.
    pub fn joint(&self, mg: &FiniteMG, obs: Option<&ObservationMap>, s: usize) -> Vec<f64> {
        let locals: Vec<&[f64]> = (0..mg.n_agents()).map(|i| self.local(obs, i, s)).collect();
        (0..mg.n_joint_actions())
            .map(|a| {
                mg.decode_action(a)
                    .iter()
                    .zip(&locals)
                    .map(|(&ai, p)| p[ai])
                    .product()
            })
            .collect()
    }
}
