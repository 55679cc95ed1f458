use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::SimRng;

/// One joint step of the team.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<Vec<f64>>,
    pub actions: Vec<[f64; 2]>,
    pub rewards: Vec<f64>,
    pub next_obs: Vec<Vec<f64>>,
    /// Neighbor ids per agent, nearest first, at `t` and `t + 1`.
    pub neighbors: Vec<Vec<usize>>,
    pub next_neighbors: Vec<Vec<usize>>,
}

impl Transition {
    fn validate(&self) -> Result<()> {
        let n = self.obs.len();
        let ok = n > 0
            && [
                self.actions.len(),
                self.rewards.len(),
                self.next_obs.len(),
                self.neighbors.len(),
                self.next_neighbors.len(),
            ]
            .iter()
            .all(|&m| m == n);
        if !ok {
            return Err(Error::Dimension("transition fields disagree on the number of agents".into()));
        }
        Ok(())
    }
}

/// Fixed-capacity ring buffer with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayMemory {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidParam("replay capacity must be positive".into()));
        }
        Ok(Self {
            capacity,
            items: Vec::new(),
            next: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Stores `tr`, overwriting the oldest entry when full.
    pub fn push(&mut self, tr: Transition) -> Result<()> {
        tr.validate()?;
        if self.items.len() < self.capacity {
            self.items.push(tr);
        } else {
            self.items[self.next] = tr;
        }
        self.next = (self.next + 1) % self.capacity;
        Ok(())
    }

    /// `size` uniform draws with replacement.
    pub fn sample(&self, size: usize, rng: &mut SimRng) -> Result<Vec<&Transition>> {
        if self.items.is_empty() {
            return Err(Error::InvalidParam("sampling from an empty memory".into()));
        }
        Ok((0..size)
            .map(|_| &self.items[rng.random_range(0..self.items.len())])
            .collect())
    }
}
