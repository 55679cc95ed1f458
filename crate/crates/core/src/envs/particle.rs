use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{seeded, SimRng};

/// Constants of the navigation world. The reward weights are declared
/// constants of this simulator, not calibrated to any reference task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleNavConfig {
    pub n_agents: usize,
    pub n_landmarks: usize,
    /// Neighbours visible to each agent.
    pub k: usize,
    pub dt: f64,
    pub max_speed: f64,
    pub max_accel: f64,
    /// Positions live in `[-half_width, half_width]^2`.
    pub half_width: f64,
    pub collision_radius: f64,
    pub collision_penalty: f64,
    pub episode_len: usize,
}

impl Default for ParticleNavConfig {
    fn default() -> Self {
        Self {
            n_agents: 6,
            n_landmarks: 6,
            k: 3,
            dt: 0.1,
            max_speed: 1.0,
            max_accel: 1.0,
            half_width: 1.0,
            collision_radius: 0.1,
            collision_penalty: 1.0,
            episode_len: 25,
        }
    }
}

impl ParticleNavConfig {
    pub fn with_agents(n: usize, k: usize) -> Self {
        Self {
            n_agents: n,
            n_landmarks: n,
            k,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_agents < 2 {
            return Err(Error::InvalidParam("navigation needs at least two agents".into()));
        }
        if self.k == 0 || self.k >= self.n_agents {
            return Err(Error::InvalidParam(format!(
                "neighbour count k={} must lie in 1..{}",
                self.k, self.n_agents
            )));
        }
        if self.n_landmarks < self.k + 1 {
            return Err(Error::InvalidParam(format!(
                "{} landmarks but observations need k+1={}",
                self.n_landmarks,
                self.k + 1
            )));
        }
        if self.episode_len == 0 || !(self.dt > 0.0) {
            return Err(Error::InvalidParam("episode length and dt must be positive".into()));
        }
        Ok(())
    }

    /// Observation length: own position and velocity, `k` neighbour
    /// offsets, `k + 1` landmark offsets.
    pub fn obs_dim(&self) -> usize {
        4 + 2 * self.k + 2 * (self.k + 1)
    }

    /// Offset of the neighbour block inside an observation.
    pub fn neighbor_block(&self, rank: usize) -> std::ops::Range<usize> {
        4 + 2 * rank..4 + 2 * rank + 2
    }
}

/// One step of the simulator.
#[derive(Debug, Clone, PartialEq)]
pub struct NavStep {
    pub observations: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub done: bool,
}

/// A small continuous cooperative-navigation world: `N` agents with
/// double-integrator dynamics must cover `N` fixed landmarks.
#[derive(Debug, Clone)]
pub struct ParticleNav {
    cfg: ParticleNavConfig,
    pos: Vec<[f64; 2]>,
    vel: Vec<[f64; 2]>,
    landmarks: Vec<[f64; 2]>,
    t: usize,
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Indices sorted by distance from `from`, ties by index.
fn nearest(from: [f64; 2], points: &[[f64; 2]], skip: Option<usize>, count: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..points.len()).filter(|&j| Some(j) != skip).collect();
    idx.sort_by(|&a, &b| {
        dist(from, points[a])
            .total_cmp(&dist(from, points[b]))
            .then(a.cmp(&b))
    });
    idx.truncate(count);
    idx
}

impl ParticleNav {
    pub fn new(cfg: ParticleNavConfig) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.n_agents;
        let m = cfg.n_landmarks;
        Ok(Self {
            pos: vec![[0.0; 2]; n],
            vel: vec![[0.0; 2]; n],
            landmarks: vec![[0.0; 2]; m],
            t: 0,
            cfg,
        })
    }

    /// Places entities explicitly.
    pub fn from_state(
        cfg: ParticleNavConfig,
        pos: Vec<[f64; 2]>,
        vel: Vec<[f64; 2]>,
        landmarks: Vec<[f64; 2]>,
    ) -> Result<Self> {
        cfg.validate()?;
        if pos.len() != cfg.n_agents || vel.len() != cfg.n_agents || landmarks.len() != cfg.n_landmarks {
            return Err(Error::Dimension("entity counts do not match the config".into()));
        }
        Ok(Self {
            cfg,
            pos,
            vel,
            landmarks,
            t: 0,
        })
    }

    pub fn config(&self) -> &ParticleNavConfig {
        &self.cfg
    }

    pub fn positions(&self) -> &[[f64; 2]] {
        &self.pos
    }

    pub fn velocities(&self) -> &[[f64; 2]] {
        &self.vel
    }

    pub fn landmarks(&self) -> &[[f64; 2]] {
        &self.landmarks
    }

    pub fn time(&self) -> usize {
        self.t
    }

    /// Uniform agent and landmark placement, zero velocities.
    pub fn reset(&mut self, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = seeded(seed);
        self.reset_with(&mut rng)
    }

    pub fn reset_with(&mut self, rng: &mut SimRng) -> Vec<Vec<f64>> {
        let h = self.cfg.half_width;
        for p in self.pos.iter_mut().chain(self.landmarks.iter_mut()) {
            *p = [rng.random_range(-h..h), rng.random_range(-h..h)];
        }
        self.vel.iter_mut().for_each(|v| *v = [0.0; 2]);
        self.t = 0;
        self.observations()
    }

    /// The `k` nearest other agents of `i`, nearest first.
    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        nearest(self.pos[i], &self.pos, Some(i), self.cfg.k)
    }

    pub fn observation(&self, i: usize) -> Vec<f64> {
        let p = self.pos[i];
        let v = self.vel[i];
        let mut o = Vec::with_capacity(self.cfg.obs_dim());
        o.extend_from_slice(&[p[0], p[1], v[0], v[1]]);
        for j in self.neighbors(i) {
            o.push(self.pos[j][0] - p[0]);
            o.push(self.pos[j][1] - p[1]);
        }
        for l in nearest(p, &self.landmarks, None, self.cfg.k + 1) {
            o.push(self.landmarks[l][0] - p[0]);
            o.push(self.landmarks[l][1] - p[1]);
        }
        o
    }

    pub fn observations(&self) -> Vec<Vec<f64>> {
        (0..self.cfg.n_agents).map(|i| self.observation(i)).collect()
    }

    /// Per-agent reward: minus the mean landmark-to-nearest-agent distance,
    /// minus the collision penalty for every other agent within the
    /// collision radius.
    pub fn rewards(&self) -> Vec<f64> {
        let coverage = self
            .landmarks
            .iter()
            .map(|&l| {
                self.pos
                    .iter()
                    .map(|&p| dist(l, p))
                    .fold(f64::INFINITY, f64::min)
            })
            .sum::<f64>()
            / self.landmarks.len() as f64;
        (0..self.cfg.n_agents)
            .map(|i| {
                let hits = (0..self.cfg.n_agents)
                    .filter(|&j| j != i && dist(self.pos[i], self.pos[j]) < self.cfg.collision_radius)
                    .count();
                -coverage - self.cfg.collision_penalty * hits as f64
            })
            .collect()
    }

    /// Applies clipped accelerations, integrates, and scores the new state.
    pub fn step(&mut self, actions: &[[f64; 2]]) -> Result<NavStep> {
        if actions.len() != self.cfg.n_agents {
            return Err(Error::Dimension(format!(
                "{} actions for {} agents",
                actions.len(),
                self.cfg.n_agents
            )));
        }
        let c = &self.cfg;
        for (i, a) in actions.iter().enumerate() {
            if !a[0].is_finite() || !a[1].is_finite() {
                return Err(Error::NonFinite(format!("action of agent {i}")));
            }
            let acc = [a[0].clamp(-c.max_accel, c.max_accel), a[1].clamp(-c.max_accel, c.max_accel)];
            let v = &mut self.vel[i];
            v[0] += acc[0] * c.dt;
            v[1] += acc[1] * c.dt;
            let speed = (v[0] * v[0] + v[1] * v[1]).sqrt();
            if speed > c.max_speed {
                v[0] *= c.max_speed / speed;
                v[1] *= c.max_speed / speed;
            }
            let p = &mut self.pos[i];
            for d in 0..2 {
                p[d] += v[d] * c.dt;
                if p[d].abs() > c.half_width {
                    p[d] = p[d].clamp(-c.half_width, c.half_width);
                    v[d] = 0.0;
                }
            }
        }
        self.t += 1;
        Ok(NavStep {
            observations: self.observations(),
            rewards: self.rewards(),
            done: self.t >= self.cfg.episode_len,
        })
    }
}

/// Trajectory rows `(t, agent, x, y, vx, vy, reward)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t: usize,
    pub agent: usize,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub reward: f64,
}

impl TrajectoryRow {
    pub fn snapshot(env: &ParticleNav, rewards: &[f64]) -> Vec<Self> {
        (0..env.cfg.n_agents)
            .map(|i| Self {
                t: env.t,
                agent: i,
                x: env.pos[i][0],
                y: env.pos[i][1],
                vx: env.vel[i][0],
                vy: env.vel[i][1],
                reward: rewards[i],
            })
            .collect()
    }
}

pub fn write_trajectory_csv<W: Write>(out: W, rows: &[TrajectoryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
