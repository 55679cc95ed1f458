use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::policy::FactoredPolicy;
use crate::error::{Error, Result};
use crate::linalg;
use crate::mg_core::{FiniteMG, ObservationMap};

/// Exact values of a fixed policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    /// `Σ_s μ(s) V(s)`.
    pub j: f64,
    /// Per-state values; zero at terminal states.
    pub v: Vec<f64>,
    /// Indexed by `s * n_joint_actions + a`; zero at terminal states.
    pub q: Vec<f64>,
    /// State-action weighting, same indexing as `q`, summing to one.
    pub d: Vec<f64>,
    /// Whether `d` is an occupancy measure of an absorbing chain rather
    /// than a stationary distribution.
    pub episodic: bool,
    pub n_joint_actions: usize,
}

impl EvalResult {
    pub fn q(&self, s: usize, a: usize) -> f64 {
        self.q[s * self.n_joint_actions + a]
    }

    pub fn d(&self, s: usize, a: usize) -> f64 {
        self.d[s * self.n_joint_actions + a]
    }
}

/// Exact evaluation by a direct solve of `(I - γ P^π) V = r̄^π` over
/// non-terminal states.
///
/// For games with terminal states `d` is the normalised undiscounted
/// occupancy from the initial distribution; otherwise it is the stationary
/// distribution of the chain restricted to states reachable under `π`.
pub fn evaluate(
    mg: &FiniteMG,
    obs: Option<&ObservationMap>,
    policy: &FactoredPolicy,
) -> Result<EvalResult> {
    policy.check(mg, obs)?;
    let n_s = mg.n_states();
    let n_a = mg.n_joint_actions();
    let gamma = mg.discount();
    let live: Vec<usize> = (0..n_s).filter(|&s| !mg.is_terminal(s)).collect();
    let mut pos = vec![usize::MAX; n_s];
    for (k, &s) in live.iter().enumerate() {
        pos[s] = k;
    }
    let m = live.len();

    let pi: Vec<Vec<f64>> = live.iter().map(|&s| policy.joint(mg, obs, s)).collect();
    let mut p_pi = DMatrix::<f64>::zeros(m, m);
    let mut r_pi = DVector::<f64>::zeros(m);
    for (k, &s) in live.iter().enumerate() {
        for a in 0..n_a {
            let w = pi[k][a];
            if w == 0.0 {
                continue;
            }
            r_pi[k] += w * mg.mean_reward(s, a);
            for &(ns, p) in mg.next_states(s, a) {
                if pos[ns] != usize::MAX {
                    p_pi[(k, pos[ns])] += w * p;
                }
            }
        }
    }

    let system = DMatrix::<f64>::identity(m, m) - &p_pi * gamma;
    let v_live = linalg::solve(&system, &r_pi, "policy evaluation")?;
    let mut v = vec![0.0; n_s];
    for (k, &s) in live.iter().enumerate() {
        v[s] = v_live[k];
    }
    let mut q = vec![0.0; n_s * n_a];
    for &s in &live {
        for a in 0..n_a {
            let cont: f64 = mg.next_states(s, a).iter().map(|&(ns, p)| p * v[ns]).sum();
            q[s * n_a + a] = mg.mean_reward(s, a) + gamma * cont;
        }
    }
    let j = mg.initial().iter().zip(&v).map(|(mu, v)| mu * v).sum();

    let episodic = mg.has_terminals();
    let state_weight = if episodic {
        occupancy(mg, &live, &p_pi)?
    } else {
        stationary(mg, &live, &pos, &p_pi)?
    };
    let mut d = vec![0.0; n_s * n_a];
    for (k, &s) in live.iter().enumerate() {
        for a in 0..n_a {
            d[s * n_a + a] = state_weight[k] * pi[k][a];
        }
    }
    let total: f64 = d.iter().sum();
    for x in &mut d {
        *x /= total;
    }
    Ok(EvalResult {
        j,
        v,
        q,
        d,
        episodic,
        n_joint_actions: n_a,
    })
}

/// Expected visits `μᵀ (I - P)^{-1}` over live states.
fn occupancy(mg: &FiniteMG, live: &[usize], p_pi: &DMatrix<f64>) -> Result<Vec<f64>> {
    let m = live.len();
    let mu = DVector::from_iterator(m, live.iter().map(|&s| mg.initial()[s]));
    let system = (DMatrix::<f64>::identity(m, m) - p_pi).transpose();
    let eta = linalg::solve(&system, &mu, "state occupancy").map_err(|e| match e {
        Error::Singular(msg) => Error::Singular(format!(
            "{msg}: the policy does not reach a terminal state with probability one"
        )),
        other => other,
    })?;
    Ok(eta.iter().map(|&x| x.max(0.0)).collect())
}

/// Stationary distribution of the chain restricted to the closed set of
/// states reachable from the initial support under the policy.
fn stationary(
    mg: &FiniteMG,
    live: &[usize],
    pos: &[usize],
    p_pi: &DMatrix<f64>,
) -> Result<Vec<f64>> {
    let m = live.len();
    let mut seen = vec![false; m];
    let mut stack: Vec<usize> = mg.initial_support().iter().map(|&s| pos[s]).collect();
    for &k in &stack {
        seen[k] = true;
    }
    while let Some(k) = stack.pop() {
        for j in 0..m {
            if p_pi[(k, j)] > 0.0 && !seen[j] {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    let idx: Vec<usize> = (0..m).filter(|&k| seen[k]).collect();
    let sub = DMatrix::from_fn(idx.len(), idx.len(), |r, c| p_pi[(idx[r], idx[c])]);
    let dist = linalg::stationary_distribution(&sub)?;
    let mut out = vec![0.0; m];
    for (r, &k) in idx.iter().enumerate() {
        out[k] = dist[r];
    }
    Ok(out)
}
