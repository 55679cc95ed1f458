use serde::{Deserialize, Serialize};

use crate::envs::ParticleNav;

/// Message totals, never decreasing.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageCounters {
    /// Observation-action pairs sent to a neighbor's critic.
    pub obs_msgs: u64,
    /// Parameter sets sent for consensus.
    pub param_msgs: u64,
    pub bytes: u64,
}

impl MessageCounters {
    pub fn add_obs(&mut self, count: u64, obs_dim: usize) {
        self.obs_msgs += count;
        // observation plus a two-dimensional action, as f64
        self.bytes += count * (obs_dim as u64 + 2) * 8;
    }

    pub fn add_params(&mut self, count: u64, n_params: usize) {
        self.param_msgs += count;
        self.bytes += count * n_params as u64 * 8;
    }
}

/// The time-varying k-nearest-neighbor graph of a navigation world.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Topology {
    pub k: usize,
}

impl Topology {
    /// Neighbors of every agent, nearest first; `min(k, N - 1)` each and
    /// never the agent itself.
    pub fn neighbors(&self, world: &ParticleNav) -> Vec<Vec<usize>> {
        let n = world.config().n_agents;
        (0..n)
            .map(|i| {
                let mut v = world.neighbors(i);
                v.truncate(self.k.min(n - 1));
                v
            })
            .collect()
    }
}
