use std::collections::HashMap;

use crate::error::{Error, Result};

use super::FiniteMG;

/// Per-agent observation functions `o^i : S → O` into a common finite space,
/// stored as explicit tables over joint-state indices.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationMap {
    space: Vec<String>,
    /// `tables[i][s]` is the index in `space` of `o^i(s)`.
    tables: Vec<Vec<usize>>,
    full_observability: bool,
}

impl ObservationMap {
    pub fn new(space: Vec<String>, tables: Vec<Vec<usize>>, full_observability: bool) -> Result<Self> {
        let map = Self {
            space,
            tables,
            full_observability,
        };
        map.validate()?;
        Ok(map)
    }

    /// Builds the tables by labelling every (agent, joint state) pair. The
    /// observation space is the set of distinct labels in first-seen order.
    pub fn tabulate<F>(mg: &FiniteMG, full_observability: bool, mut label: F) -> Result<Self>
    where
        F: FnMut(usize, &[usize]) -> String,
    {
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut space = Vec::new();
        let mut tables = vec![Vec::with_capacity(mg.n_states()); mg.n_agents()];
        for s in 0..mg.n_states() {
            let locals = mg.decode_state(s);
            for (i, table) in tables.iter_mut().enumerate() {
                let l = label(i, &locals);
                let k = *index.entry(l.clone()).or_insert_with(|| {
                    space.push(l);
                    space.len() - 1
                });
                table.push(k);
            }
        }
        Self::new(space, tables, full_observability)
    }

    /// `o^i(s) = s`: every agent observes the raw joint state.
    pub fn identity(mg: &FiniteMG) -> Result<Self> {
        Self::tabulate(mg, true, |_, locals| {
            locals.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(",")
        })
    }

    fn validate(&self) -> Result<()> {
        let Some(first) = self.tables.first() else {
            return Err(Error::InvalidModel("observation map with no agents".into()));
        };
        let n_states = first.len();
        for (i, t) in self.tables.iter().enumerate() {
            if t.len() != n_states {
                return Err(Error::Dimension(format!(
                    "agent {i} observation table has {} rows, expected {n_states}",
                    t.len()
                )));
            }
            if let Some(&bad) = t.iter().find(|&&o| o >= self.space.len()) {
                return Err(Error::InvalidModel(format!(
                    "agent {i} maps into observation {bad} outside the declared space"
                )));
            }
        }
        if self.full_observability {
            for (i, t) in self.tables.iter().enumerate() {
                let mut hit = vec![false; self.space.len()];
                for &o in t {
                    if hit[o] {
                        return Err(Error::InvalidModel(format!(
                            "agent {i}: observation '{}' is shared by two states, so o^{i} is not injective",
                            self.space[o]
                        )));
                    }
                    hit[o] = true;
                }
            }
        }
        Ok(())
    }

    /// Errors unless this map fits `mg`.
    pub fn check_against(&self, mg: &FiniteMG) -> Result<()> {
        if self.tables.len() != mg.n_agents() {
            return Err(Error::Dimension(format!(
                "observation map has {} agents, game has {}",
                self.tables.len(),
                mg.n_agents()
            )));
        }
        if self.tables[0].len() != mg.n_states() {
            return Err(Error::Dimension(format!(
                "observation map covers {} states, game has {}",
                self.tables[0].len(),
                mg.n_states()
            )));
        }
        Ok(())
    }

    pub fn n_agents(&self) -> usize {
        self.tables.len()
    }

    pub fn space(&self) -> &[String] {
        &self.space
    }

    pub fn full_observability(&self) -> bool {
        self.full_observability
    }

    /// Index of `o^i(s)` in the observation space.
    pub fn observe(&self, agent: usize, s: usize) -> usize {
        self.tables[agent][s]
    }

    pub fn label(&self, agent: usize, s: usize) -> &str {
        &self.space[self.tables[agent][s]]
    }

    pub(crate) fn tables(&self) -> &[Vec<usize>] {
        &self.tables
    }
}
