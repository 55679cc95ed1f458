use std::collections::{BTreeSet, HashMap};

use serde::Serialize;

use crate::error::{Error, Result};

use super::{FiniteMG, Layout, ObservationMap, Permutation};

/// Absolute tolerance for comparing constructed probabilities and rewards.
pub const TABLE_TOL: f64 = 1e-9;

/// Default cap on `|S| · |A| · |permutations checked|`.
pub const DEFAULT_BUDGET: u128 = 50_000_000;

/// Which permutations the verifier enumerates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PermutationSet {
    /// The `N(N-1)/2` transpositions, which generate the symmetric group.
    Transpositions,
    /// All `N!` permutations.
    All,
}

impl PermutationSet {
    pub fn enumerate(self, n: usize) -> Vec<Permutation> {
        match self {
            Self::Transpositions => Permutation::transpositions(n),
            Self::All => Permutation::all(n),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct HomogeneityOptions {
    pub permutations: PermutationSet,
    pub budget: u128,
    pub tolerance: f64,
}

impl Default for HomogeneityOptions {
    fn default() -> Self {
        Self {
            permutations: PermutationSet::Transpositions,
            budget: DEFAULT_BUDGET,
            tolerance: TABLE_TOL,
        }
    }
}

/// A concrete witness that a condition fails.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Counterexample {
    pub state: Vec<String>,
    pub action: Option<Vec<String>>,
    pub permutation: Vec<usize>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionResult {
    pub passed: bool,
    pub counterexample: Option<Counterexample>,
    pub note: Option<String>,
}

impl ConditionResult {
    fn pass() -> Self {
        Self {
            passed: true,
            counterexample: None,
            note: None,
        }
    }

    fn fail(c: Counterexample) -> Self {
        Self {
            passed: false,
            counterexample: Some(c),
            note: None,
        }
    }

    fn not_evaluated(why: &str) -> Self {
        Self {
            passed: false,
            counterexample: None,
            note: Some(why.to_string()),
        }
    }
}

/// Outcome of checking the three homogeneity conditions: (i) identical
/// local spaces, (ii) permutation-invariant transitions and
/// permutation-preserving rewards, (iii) permutation-preserving observations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HomogeneityReport {
    pub condition_i: bool,
    pub condition_ii: ConditionResult,
    pub condition_iii: ConditionResult,
    pub permutations: PermutationSet,
    pub permutations_checked: usize,
}

impl HomogeneityReport {
    pub fn is_homogeneous(&self) -> bool {
        self.condition_i && self.condition_ii.passed && self.condition_iii.passed
    }
}

/// Maps local indices between agents through the shared label set. Only
/// valid once condition (i) holds.
struct LocalRelabel {
    /// `to_canon[i][k]`: canonical index of agent i's k-th local state.
    to_canon: Vec<Vec<usize>>,
    /// `from_canon[i][c]`: agent i's local index of canonical state c.
    from_canon: Vec<Vec<usize>>,
}

impl LocalRelabel {
    fn new(sets: &[Vec<String>]) -> Self {
        let canon: HashMap<&str, usize> = sets[0]
            .iter()
            .enumerate()
            .map(|(k, l)| (l.as_str(), k))
            .collect();
        let to_canon: Vec<Vec<usize>> = sets
            .iter()
            .map(|set| set.iter().map(|l| canon[l.as_str()]).collect())
            .collect();
        let from_canon = to_canon
            .iter()
            .map(|tc| {
                let mut inv = vec![0; tc.len()];
                for (k, &c) in tc.iter().enumerate() {
                    inv[c] = k;
                }
                inv
            })
            .collect();
        Self {
            to_canon,
            from_canon,
        }
    }

    /// Local tuple after permuting agents: `(Mx)^{m(i)} = x^i`.
    fn permute(&self, m: &Permutation, x: &[usize]) -> Vec<usize> {
        let mut out = vec![0; x.len()];
        for (i, &k) in x.iter().enumerate() {
            let j = m.image(i);
            out[j] = self.from_canon[j][self.to_canon[i][k]];
        }
        out
    }
}

fn same_sets(sets: &[Vec<String>]) -> bool {
    let first: BTreeSet<&String> = sets[0].iter().collect();
    sets.iter().all(|s| {
        s.len() == sets[0].len() && s.iter().collect::<BTreeSet<_>>() == first
    })
}

fn check_budget(mg: &FiniteMG, n_perms: usize, budget: u128) -> Result<()> {
    let needed = mg.n_states() as u128 * mg.n_joint_actions() as u128 * n_perms as u128;
    if needed > budget {
        return Err(Error::BudgetExceeded {
            what: "homogeneity check |S|·|A|·|M|".into(),
            needed,
            budget,
        });
    }
    Ok(())
}

/// Permutes a joint state index.
pub(crate) struct StatePermuter {
    states: LocalRelabel,
    actions: LocalRelabel,
}

impl StatePermuter {
    /// `None` when local spaces differ across agents.
    pub(crate) fn new(layout: &Layout) -> Option<Self> {
        if !same_sets(&layout.local_states) || !same_sets(&layout.local_actions) {
            return None;
        }
        Some(Self {
            states: LocalRelabel::new(&layout.local_states),
            actions: LocalRelabel::new(&layout.local_actions),
        })
    }

    pub(crate) fn state(&self, mg: &FiniteMG, m: &Permutation, s: usize) -> usize {
        let locals = self.states.permute(m, &mg.decode_state(s));
        mg.encode_state(&locals).expect("permuted tuple stays in range")
    }

    pub(crate) fn action(&self, mg: &FiniteMG, m: &Permutation, a: usize) -> usize {
        let locals = self.actions.permute(m, &mg.decode_action(a));
        mg.encode_action(&locals).expect("permuted tuple stays in range")
    }
}

/// Checks the three homogeneity conditions by enumeration.
///
/// Refuses with [`Error::BudgetExceeded`] instead of returning a partial
/// verdict when `|S|·|A|·|M|` exceeds the configured budget.
pub fn check_homogeneous(
    mg: &FiniteMG,
    obs: &ObservationMap,
    opts: HomogeneityOptions,
) -> Result<HomogeneityReport> {
    obs.check_against(mg)?;
    let n = mg.n_agents();
    let perms = opts.permutations.enumerate(n);
    check_budget(mg, perms.len(), opts.budget)?;

    let Some(permuter) = StatePermuter::new(mg.layout()) else {
        let why = "requires identical local state and action spaces";
        return Ok(HomogeneityReport {
            condition_i: false,
            condition_ii: ConditionResult::not_evaluated(why),
            condition_iii: ConditionResult::not_evaluated(why),
            permutations: opts.permutations,
            permutations_checked: 0,
        });
    };

    let condition_ii = check_dynamics(mg, &permuter, &perms, opts.tolerance);
    let condition_iii = check_observations(mg, obs, &permuter, &perms);
    Ok(HomogeneityReport {
        condition_i: true,
        condition_ii,
        condition_iii,
        permutations: opts.permutations,
        permutations_checked: perms.len(),
    })
}

fn check_dynamics(
    mg: &FiniteMG,
    permuter: &StatePermuter,
    perms: &[Permutation],
    tol: f64,
) -> ConditionResult {
    for m in perms {
        for s in 0..mg.n_states() {
            let ms = permuter.state(mg, m, s);
            for a in 0..mg.n_joint_actions() {
                let ma = permuter.action(mg, m, a);
                let witness = |detail: String| Counterexample {
                    state: mg.state_labels(s),
                    action: Some(mg.action_labels(a)),
                    permutation: m.as_slice().to_vec(),
                    detail,
                };

                // R(Ms, Ma) = M R(s, a)
                let r = mg.rewards(s, a);
                let r_perm = mg.rewards(ms, ma);
                for (i, &ri) in r.iter().enumerate() {
                    let j = m.image(i);
                    if (r_perm[j] - ri).abs() > tol {
                        return ConditionResult::fail(witness(format!(
                            "R^{j}(Ms,Ma) = {} but R^{i}(s,a) = {ri}",
                            r_perm[j]
                        )));
                    }
                }

                // P(Ms' | Ms, Ma) = P(s' | s, a); both rows sum to one, so
                // matching every entry of the source row is sufficient.
                let target = mg.next_states(ms, ma);
                for &(ns, p) in mg.next_states(s, a) {
                    let mns = permuter.state(mg, m, ns);
                    let q = target
                        .iter()
                        .find(|e| e.0 == mns)
                        .map(|e| e.1)
                        .unwrap_or(0.0);
                    if (p - q).abs() > tol {
                        return ConditionResult::fail(witness(format!(
                            "P({}|s,a) = {p} but P(M s'|Ms,Ma) = {q}",
                            mg.state_labels(ns).join(",")
                        )));
                    }
                }
            }
        }
    }
    ConditionResult::pass()
}

fn check_observations(
    mg: &FiniteMG,
    obs: &ObservationMap,
    permuter: &StatePermuter,
    perms: &[Permutation],
) -> ConditionResult {
    for m in perms {
        for s in 0..mg.n_states() {
            let ms = permuter.state(mg, m, s);
            for i in 0..mg.n_agents() {
                let j = m.image(i);
                // (o^1(Ms), …, o^N(Ms)) = M (o^1(s), …, o^N(s))
                if obs.observe(j, ms) != obs.observe(i, s) {
                    return ConditionResult::fail(Counterexample {
                        state: mg.state_labels(s),
                        action: None,
                        permutation: m.as_slice().to_vec(),
                        detail: format!(
                            "o^{j}(Ms) = '{}' but o^{i}(s) = '{}'",
                            obs.label(j, ms),
                            obs.label(i, s)
                        ),
                    });
                }
            }
        }
    }
    ConditionResult::pass()
}

/// Result of [`check_observation_identity`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservationIdentityReport {
    pub passed: bool,
    pub checked: usize,
    pub witnesses: Vec<Counterexample>,
}

/// For every state `s` and every swap `M = (i j)`, checks
/// `o^i(s) = o^j(Ms)`: the identity that lets a single shared
/// observation-based policy act for every agent.
pub fn check_observation_identity(
    mg: &FiniteMG,
    obs: &ObservationMap,
    budget: u128,
) -> Result<ObservationIdentityReport> {
    obs.check_against(mg)?;
    let n = mg.n_agents();
    let needed = mg.n_states() as u128 * (n * n.saturating_sub(1) / 2) as u128;
    if needed > budget {
        return Err(Error::BudgetExceeded {
            what: "observation identity |S|·|transpositions|".into(),
            needed,
            budget,
        });
    }
    let Some(permuter) = StatePermuter::new(mg.layout()) else {
        return Err(Error::InvalidModel(
            "observation identity needs identical local spaces".into(),
        ));
    };
    let mut witnesses = Vec::new();
    let mut checked = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            let m = Permutation::transposition(n, i, j)?;
            for s in 0..mg.n_states() {
                let ms = permuter.state(mg, &m, s);
                checked += 1;
                for (a, b) in [(i, j), (j, i)] {
                    if obs.observe(a, s) != obs.observe(b, ms) {
                        witnesses.push(Counterexample {
                            state: mg.state_labels(s),
                            action: None,
                            permutation: m.as_slice().to_vec(),
                            detail: format!(
                                "o^{a}(s) = '{}' but o^{b}(Ms) = '{}'",
                                obs.label(a, s),
                                obs.label(b, ms)
                            ),
                        });
                    }
                }
            }
        }
    }
    Ok(ObservationIdentityReport {
        passed: witnesses.is_empty(),
        checked,
        witnesses,
    })
}

/// Renames agents: agent `m(i)` of the result is agent `i` of the input.
/// Requires identical local spaces. A homogeneous game maps onto an
/// identical game.
pub fn permute_agents(
    mg: &FiniteMG,
    obs: &ObservationMap,
    m: &Permutation,
) -> Result<(FiniteMG, ObservationMap)> {
    if m.len() != mg.n_agents() {
        return Err(Error::Dimension(format!(
            "permutation over {} agents for a {}-agent game",
            m.len(),
            mg.n_agents()
        )));
    }
    let permuter = StatePermuter::new(mg.layout()).ok_or_else(|| {
        Error::InvalidModel("agent relabelling needs identical local spaces".into())
    })?;
    let mut out = FiniteMG::empty(mg.layout().clone(), mg.discount())?;
    let n = mg.n_agents();
    for s in 0..mg.n_states() {
        let ms = permuter.state(mg, m, s);
        out.set_initial(ms, mg.initial()[s]);
        if mg.is_terminal(s) {
            out.set_terminal(ms);
        }
        for a in 0..mg.n_joint_actions() {
            let ma = permuter.action(mg, m, a);
            for &(ns, p) in mg.next_states(s, a) {
                out.push_transition(ms, ma, permuter.state(mg, m, ns), p);
            }
            let r = m.apply(mg.rewards(s, a))?;
            out.set_rewards(ms, ma, &r);
        }
    }
    out.validate()?;

    let mut tables = vec![vec![0; mg.n_states()]; n];
    for s in 0..mg.n_states() {
        let ms = permuter.state(mg, m, s);
        for (i, _) in obs.tables().iter().enumerate() {
            tables[m.image(i)][ms] = obs.observe(i, s);
        }
    }
    let new_obs = ObservationMap::new(obs.space().to_vec(), tables, obs.full_observability())?;
    Ok((out, new_obs))
}
