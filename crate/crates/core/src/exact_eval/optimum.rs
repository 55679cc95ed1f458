use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::evaluate::evaluate;
use super::policy::FactoredPolicy;
use crate::error::{Error, Result};
use crate::mg_core::{FiniteMG, ObservationMap, DEFAULT_BUDGET};

/// Grid spacing of the stochastic shared-policy search.
pub const GRID_STEP: f64 = 0.01;

/// Bracket width at which golden-section refinement stops.
pub const REFINE_TOL: f64 = 1e-10;

const MAX_POLICY_ITERATIONS: usize = 10_000;

/// Policy class searched by [`brute_force_optimum`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyClass {
    /// Decentralised tables over the joint state.
    StateBased,
    /// Each agent acts on its own observation.
    ObsBased,
    /// One observation table used by every agent.
    ObsBasedShared,
}

impl PolicyClass {
    pub const ALL: [Self; 3] = [Self::StateBased, Self::ObsBased, Self::ObsBasedShared];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    pub class: PolicyClass,
    pub value: f64,
    pub policy: FactoredPolicy,
    /// Set when the stochastic search beat every deterministic policy.
    pub stochastic: bool,
    /// Candidate policies (or candidate local assignments) scored.
    pub candidates: u128,
}

/// Exact maximum of `J` over deterministic policies of `class`.
///
/// One-step games are solved per state (state-based) or per connected
/// group of observation keys (observation-based). Otherwise state-based
/// uses policy iteration and observation-based enumerates every
/// assignment of actions to the observations met in reachable states.
/// For the shared class, when all reachable states produce one shared
/// observation with two actions, a grid plus golden-section search over
/// the probability of the second action also runs.
pub fn brute_force_optimum(
    mg: &FiniteMG,
    obs: Option<&ObservationMap>,
    class: PolicyClass,
    budget: u128,
) -> Result<Optimum> {
    match class {
        PolicyClass::StateBased => state_based(mg),
        PolicyClass::ObsBased | PolicyClass::ObsBasedShared => {
            let obs = obs.ok_or_else(|| {
                Error::InvalidParam("observation-based search needs an observation map".into())
            })?;
            obs.check_against(mg)?;
            observation_based(mg, obs, class, budget)
        }
    }
}

/// `J` of a deterministic joint choice in a one-step game, summed over the
/// initial support in state order so that equal choices give bitwise
/// equal values whichever class produced them.
fn one_step_value(mg: &FiniteMG, choice: &[usize]) -> f64 {
    mg.initial_support()
        .iter()
        .map(|&s| mg.initial()[s] * mg.mean_reward(s, choice[s]))
        .sum()
}

fn state_based(mg: &FiniteMG) -> Result<Optimum> {
    let n_a = mg.n_joint_actions();
    let mut choice = vec![0usize; mg.n_states()];
    if mg.is_one_step() {
        for s in mg.initial_support() {
            choice[s] = argmax((0..n_a).map(|a| mg.mean_reward(s, a)));
        }
        let policy = FactoredPolicy::deterministic(mg, |s| choice[s]);
        return Ok(Optimum {
            class: PolicyClass::StateBased,
            value: one_step_value(mg, &choice),
            policy,
            stochastic: false,
            candidates: (mg.initial_support().len() * n_a) as u128,
        });
    }
    let gamma = mg.discount();
    let mut iterations = 0;
    loop {
        let policy = FactoredPolicy::deterministic(mg, |s| choice[s]);
        let eval = evaluate(mg, None, &policy)?;
        let mut changed = false;
        for s in 0..mg.n_states() {
            if mg.is_terminal(s) {
                continue;
            }
            let score = |a: usize| {
                mg.mean_reward(s, a)
                    + gamma
                        * mg.next_states(s, a)
                            .iter()
                            .map(|&(ns, p)| p * eval.v[ns])
                            .sum::<f64>()
            };
            let best = argmax((0..n_a).map(score));
            if score(best) > score(choice[s]) + 1e-12 {
                choice[s] = best;
                changed = true;
            }
        }
        iterations += 1;
        if !changed {
            return Ok(Optimum {
                class: PolicyClass::StateBased,
                value: eval.j,
                policy,
                stochastic: false,
                candidates: iterations as u128,
            });
        }
        if iterations >= MAX_POLICY_ITERATIONS {
            return Err(Error::Diverged("policy iteration did not stabilise".into()));
        }
    }
}

/// First index of the maximum.
fn argmax<I: Iterator<Item = f64>>(values: I) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (k, v) in values.enumerate() {
        if v > best.1 {
            best = (k, v);
        }
    }
    best.0
}

/// Observation keys: `(agent, obs)` pairs, or plain observations when the
/// table is shared.
struct Keys {
    shared: bool,
    n_obs: usize,
    sizes: Vec<usize>,
}

impl Keys {
    fn new(mg: &FiniteMG, obs: &ObservationMap, shared: bool) -> Result<Self> {
        let acts = &mg.layout().local_actions;
        if shared && acts.iter().any(|a| a.len() != acts[0].len()) {
            return Err(Error::InvalidModel(
                "a shared policy needs identical local action sets".into(),
            ));
        }
        Ok(Self {
            shared,
            n_obs: obs.space().len(),
            sizes: acts.iter().map(Vec::len).collect(),
        })
    }

    fn key(&self, obs: &ObservationMap, agent: usize, s: usize) -> usize {
        let o = obs.observe(agent, s);
        if self.shared {
            o
        } else {
            agent * self.n_obs + o
        }
    }

    fn n_actions(&self, key: usize) -> usize {
        if self.shared {
            self.sizes[0]
        } else {
            self.sizes[key / self.n_obs]
        }
    }

    /// Expands a key -> action assignment into a policy.
    fn policy(&self, mg: &FiniteMG, assign: &HashMap<usize, usize>) -> Result<FactoredPolicy> {
        let n = mg.n_agents();
        let table_for = |agent: usize| -> Vec<Vec<f64>> {
            let k = self.sizes[agent];
            (0..self.n_obs)
                .map(|o| {
                    let key = if self.shared { o } else { agent * self.n_obs + o };
                    match assign.get(&key) {
                        Some(&a) => {
                            let mut row = vec![0.0; k];
                            row[a] = 1.0;
                            row
                        }
                        None => vec![1.0 / k as f64; k],
                    }
                })
                .collect()
        };
        if self.shared {
            FactoredPolicy::shared(table_for(0), n)
        } else {
            FactoredPolicy::observation_based((0..n).map(table_for).collect())
        }
    }
}

fn observation_based(
    mg: &FiniteMG,
    obs: &ObservationMap,
    class: PolicyClass,
    budget: u128,
) -> Result<Optimum> {
    let keys = Keys::new(mg, obs, class == PolicyClass::ObsBasedShared)?;
    let n = mg.n_agents();
    let states = if mg.is_one_step() {
        mg.initial_support()
    } else {
        mg.reachable_states()
    };
    let mut best = if mg.is_one_step() {
        one_step_search(mg, obs, &keys, &states, class, budget)?
    } else {
        joint_search(mg, obs, &keys, &states, class, budget)?
    };

    if class == PolicyClass::ObsBasedShared {
        let mut distinct: Vec<usize> = states
            .iter()
            .flat_map(|&s| (0..n).map(move |i| (i, s)))
            .map(|(i, s)| keys.key(obs, i, s))
            .collect();
        distinct.sort_unstable();
        distinct.dedup();
        if distinct.len() == 1 && keys.sizes[0] == 2 {
            let key = distinct[0];
            let (p, value, evals) = shared_stochastic_search(mg, obs, &keys, key)?;
            best.candidates += evals;
            if value > best.value {
                best.value = value;
                best.policy = shared_policy(&keys, n, key, p)?;
                best.stochastic = true;
            }
        }
    }
    Ok(best)
}

fn one_step_search(
    mg: &FiniteMG,
    obs: &ObservationMap,
    keys: &Keys,
    states: &[usize],
    class: PolicyClass,
    budget: u128,
) -> Result<Optimum> {
    let n = mg.n_agents();
    // union-find over support states linked by shared keys
    let mut parent: Vec<usize> = (0..states.len()).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        let mut c = x;
        while p[c] != r {
            let next = p[c];
            p[c] = r;
            c = next;
        }
        r
    }
    let mut owner: HashMap<usize, usize> = HashMap::new();
    for (k, &s) in states.iter().enumerate() {
        for i in 0..n {
            let key = keys.key(obs, i, s);
            match owner.get(&key) {
                Some(&other) => {
                    let (a, b) = (find(&mut parent, k), find(&mut parent, other));
                    if a != b {
                        parent[a.max(b)] = a.min(b);
                    }
                }
                None => {
                    owner.insert(key, k);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut group_of: HashMap<usize, usize> = HashMap::new();
    for k in 0..states.len() {
        let root = find(&mut parent, k);
        let g = *group_of.entry(root).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(k);
    }

    let mut total: u128 = 0;
    let mut group_keys = Vec::with_capacity(groups.len());
    for g in &groups {
        let mut ks: Vec<usize> = g
            .iter()
            .flat_map(|&k| (0..n).map(move |i| (i, states[k])))
            .map(|(i, s)| keys.key(obs, i, s))
            .collect();
        ks.sort_unstable();
        ks.dedup();
        let mut count: u128 = 1;
        for &key in &ks {
            count = count.saturating_mul(keys.n_actions(key) as u128);
        }
        total = total.saturating_add(count);
        group_keys.push(ks);
    }
    if total > budget {
        return Err(Error::BudgetExceeded {
            what: format!("{class:?} assignments"),
            needed: total,
            budget,
        });
    }

    let mut assign: HashMap<usize, usize> = HashMap::new();
    for (g, ks) in groups.iter().zip(&group_keys) {
        let sizes: Vec<usize> = ks.iter().map(|&k| keys.n_actions(k)).collect();
        let mut digits = vec![0usize; ks.len()];
        let mut best = (f64::NEG_INFINITY, digits.clone());
        loop {
            let local: HashMap<usize, usize> =
                ks.iter().copied().zip(digits.iter().copied()).collect();
            let mut value = 0.0;
            for &k in g {
                let s = states[k];
                let a: Vec<usize> = (0..n).map(|i| local[&keys.key(obs, i, s)]).collect();
                value += mg.initial()[s] * mg.mean_reward(s, mg.encode_action(&a)?);
            }
            if value > best.0 {
                best = (value, digits.clone());
            }
            if !increment(&mut digits, &sizes) {
                break;
            }
        }
        for (&k, &a) in ks.iter().zip(&best.1) {
            assign.insert(k, a);
        }
    }

    let mut choice = vec![0usize; mg.n_states()];
    for &s in states {
        let a: Vec<usize> = (0..n).map(|i| assign[&keys.key(obs, i, s)]).collect();
        choice[s] = mg.encode_action(&a)?;
    }
    Ok(Optimum {
        class,
        value: one_step_value(mg, &choice),
        policy: keys.policy(mg, &assign)?,
        stochastic: false,
        candidates: total,
    })
}

fn joint_search(
    mg: &FiniteMG,
    obs: &ObservationMap,
    keys: &Keys,
    states: &[usize],
    class: PolicyClass,
    budget: u128,
) -> Result<Optimum> {
    let n = mg.n_agents();
    let mut ks: Vec<usize> = states
        .iter()
        .flat_map(|&s| (0..n).map(move |i| (i, s)))
        .map(|(i, s)| keys.key(obs, i, s))
        .collect();
    ks.sort_unstable();
    ks.dedup();
    let sizes: Vec<usize> = ks.iter().map(|&k| keys.n_actions(k)).collect();
    let total = sizes
        .iter()
        .fold(1u128, |acc, &k| acc.saturating_mul(k as u128));
    if total > budget {
        return Err(Error::BudgetExceeded {
            what: format!("{class:?} policies"),
            needed: total,
            budget,
        });
    }
    let mut digits = vec![0usize; ks.len()];
    let mut best: Option<(f64, FactoredPolicy)> = None;
    loop {
        let assign: HashMap<usize, usize> = ks.iter().copied().zip(digits.iter().copied()).collect();
        let policy = keys.policy(mg, &assign)?;
        let j = evaluate(mg, Some(obs), &policy)?.j;
        if best.as_ref().is_none_or(|(v, _)| j > *v) {
            best = Some((j, policy));
        }
        if !increment(&mut digits, &sizes) {
            break;
        }
    }
    let (value, policy) = best.expect("at least one assignment");
    Ok(Optimum {
        class,
        value,
        policy,
        stochastic: false,
        candidates: total,
    })
}

/// Mixed-radix increment; false after the last combination.
fn increment(digits: &mut [usize], sizes: &[usize]) -> bool {
    for k in (0..digits.len()).rev() {
        digits[k] += 1;
        if digits[k] < sizes[k] {
            return true;
        }
        digits[k] = 0;
    }
    false
}

fn shared_policy(keys: &Keys, n: usize, key: usize, p: f64) -> Result<FactoredPolicy> {
    let table = (0..keys.n_obs)
        .map(|o| if o == key { vec![1.0 - p, p] } else { vec![0.5, 0.5] })
        .collect();
    FactoredPolicy::shared(table, n)
}

/// Maximises `J(p)` where `p` is the shared probability of action 1 at
/// the single observed key. Returns `(p, J, evaluations)`.
fn shared_stochastic_search(
    mg: &FiniteMG,
    obs: &ObservationMap,
    keys: &Keys,
    key: usize,
) -> Result<(f64, f64, u128)> {
    let n = mg.n_agents();
    let mut evals: u128 = 0;
    let mut value = |p: f64| -> Result<f64> {
        evals += 1;
        Ok(evaluate(mg, Some(obs), &shared_policy(keys, n, key, p)?)?.j)
    };
    let steps = (1.0 / GRID_STEP).round() as usize;
    let mut best = (0usize, f64::NEG_INFINITY);
    for k in 0..=steps {
        let v = value(k as f64 / steps as f64)?;
        if v > best.1 {
            best = (k, v);
        }
    }
    let mut lo = best.0.saturating_sub(1) as f64 / steps as f64;
    let mut hi = (best.0 + 1).min(steps) as f64 / steps as f64;
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let mut f1 = value(x1)?;
    let mut f2 = value(x2)?;
    while hi - lo > REFINE_TOL {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = value(x2)?;
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = value(x1)?;
        }
    }
    let p_mid = 0.5 * (lo + hi);
    let f_mid = value(p_mid)?;
    let grid_p = best.0 as f64 / steps as f64;
    let (p, v) = [(grid_p, best.1), (x1, f1), (x2, f2), (p_mid, f_mid)]
        .into_iter()
        .fold((grid_p, f64::NEG_INFINITY), |acc, c| if c.1 > acc.1 { c } else { acc });
    Ok((p, v, evals))
}

/// The three maxima and the lossless-sharing verdict for one game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharingReport {
    pub state_based: f64,
    pub obs_based: f64,
    pub obs_based_shared: f64,
    /// True when all three maxima are exactly equal.
    pub lossless: bool,
    pub shared_stochastic: bool,
}

pub fn sharing_report(mg: &FiniteMG, obs: &ObservationMap) -> Result<SharingReport> {
    sharing_report_with_budget(mg, obs, DEFAULT_BUDGET)
}

pub fn sharing_report_with_budget(
    mg: &FiniteMG,
    obs: &ObservationMap,
    budget: u128,
) -> Result<SharingReport> {
    let s = brute_force_optimum(mg, Some(obs), PolicyClass::StateBased, budget)?;
    let o = brute_force_optimum(mg, Some(obs), PolicyClass::ObsBased, budget)?;
    let sh = brute_force_optimum(mg, Some(obs), PolicyClass::ObsBasedShared, budget)?;
    Ok(SharingReport {
        state_based: s.value,
        obs_based: o.value,
        obs_based_shared: sh.value,
        lossless: s.value == o.value && o.value == sh.value,
        shared_stochastic: sh.stochastic,
    })
}
