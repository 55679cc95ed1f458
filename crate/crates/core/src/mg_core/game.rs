use crate::error::{Error, Result};

/// Row-sum tolerance for transition tables.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Result of applying one joint action in one joint state.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    /// Sparse next-state distribution over local-index tuples.
    pub next: Vec<(Vec<usize>, f64)>,
    /// One reward per agent.
    pub rewards: Vec<f64>,
}

/// Names of the local state and action sets of every agent.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub local_states: Vec<Vec<String>>,
    pub local_actions: Vec<Vec<String>>,
}

impl Layout {
    /// Every agent gets the same local state and action sets.
    pub fn homogeneous(n_agents: usize, states: &[&str], actions: &[&str]) -> Self {
        let s: Vec<String> = states.iter().map(|x| x.to_string()).collect();
        let a: Vec<String> = actions.iter().map(|x| x.to_string()).collect();
        Self {
            local_states: vec![s; n_agents],
            local_actions: vec![a; n_agents],
        }
    }

    pub fn n_agents(&self) -> usize {
        self.local_states.len()
    }
}

/// Mixed-radix codec between index tuples and flat indices. Agent 0 is the
/// most significant digit so flat order is lexicographic in the tuple.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Radix {
    sizes: Vec<usize>,
    strides: Vec<usize>,
    total: usize,
}

impl Radix {
    fn new(sizes: Vec<usize>) -> Result<Self> {
        let mut strides = vec![0; sizes.len()];
        let mut total: usize = 1;
        for (k, &size) in sizes.iter().enumerate().rev() {
            if size == 0 {
                return Err(Error::InvalidModel(format!("agent {k} has an empty local set")));
            }
            strides[k] = total;
            total = total.checked_mul(size).ok_or_else(|| {
                Error::InvalidModel("joint space size overflows usize".into())
            })?;
        }
        Ok(Self {
            sizes,
            strides,
            total,
        })
    }

    pub(crate) fn encode(&self, digits: &[usize]) -> Result<usize> {
        if digits.len() != self.sizes.len() {
            return Err(Error::Dimension(format!(
                "tuple of length {} for {} agents",
                digits.len(),
                self.sizes.len()
            )));
        }
        let mut idx = 0;
        for (k, &d) in digits.iter().enumerate() {
            if d >= self.sizes[k] {
                return Err(Error::InvalidParam(format!(
                    "local index {d} out of range for agent {k}"
                )));
            }
            idx += d * self.strides[k];
        }
        Ok(idx)
    }

    pub(crate) fn decode(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.sizes.len()];
        for (k, &stride) in self.strides.iter().enumerate() {
            out[k] = idx / stride;
            idx %= stride;
        }
        out
    }
}

/// A finite cooperative Markov game with factored joint state and action
/// spaces (Cartesian products of the agents' local sets).
///
/// Terminal states are absorbing with zero reward.
#[derive(Debug, Clone)]
pub struct FiniteMG {
    layout: Layout,
    states: Radix,
    actions: Radix,
    /// Indexed by `s * n_joint_actions + a`.
    transitions: Vec<Vec<(usize, f64)>>,
    /// Indexed by `(s * n_joint_actions + a) * n_agents + i`.
    rewards: Vec<f64>,
    initial: Vec<f64>,
    discount: f64,
    terminal: Vec<bool>,
}

impl FiniteMG {
    /// Tabulates a game by calling `dynamics` on every non-terminal
    /// (state, joint action) pair.
    pub fn tabulate<T, F>(
        layout: Layout,
        discount: f64,
        initial: &[(Vec<usize>, f64)],
        is_terminal: T,
        mut dynamics: F,
    ) -> Result<Self>
    where
        T: Fn(&[usize]) -> bool,
        F: FnMut(&[usize], &[usize]) -> Outcome,
    {
        let n = layout.n_agents();
        let mut mg = Self::empty(layout, discount)?;
        for (s, p) in initial {
            let idx = mg.states.encode(s)?;
            mg.initial[idx] += p;
        }
        let n_a = mg.actions.total;
        for s in 0..mg.states.total {
            let ls = mg.states.decode(s);
            mg.terminal[s] = is_terminal(&ls);
            for a in 0..n_a {
                let row = s * n_a + a;
                if mg.terminal[s] {
                    mg.transitions[row] = vec![(s, 1.0)];
                    continue;
                }
                let la = mg.actions.decode(a);
                let out = dynamics(&ls, &la);
                if out.rewards.len() != n {
                    return Err(Error::Dimension(format!(
                        "dynamics returned {} rewards for {n} agents",
                        out.rewards.len()
                    )));
                }
                mg.rewards[row * n..(row + 1) * n].copy_from_slice(&out.rewards);
                let mut next = Vec::with_capacity(out.next.len());
                for (ns, p) in &out.next {
                    next.push((mg.states.encode(ns)?, *p));
                }
                mg.transitions[row] = merge_sparse(next);
            }
        }
        mg.validate()?;
        Ok(mg)
    }

    /// An all-zero game skeleton; used by the file loader which fills the
    /// tables entry by entry before calling [`FiniteMG::validate`].
    pub(crate) fn empty(layout: Layout, discount: f64) -> Result<Self> {
        if layout.local_actions.len() != layout.local_states.len() {
            return Err(Error::Dimension(format!(
                "{} local state sets but {} local action sets",
                layout.local_states.len(),
                layout.local_actions.len()
            )));
        }
        if layout.n_agents() == 0 {
            return Err(Error::InvalidModel("a game needs at least one agent".into()));
        }
        if !(0.0..=1.0).contains(&discount) {
            return Err(Error::InvalidParam(format!("discount {discount} outside [0, 1]")));
        }
        let states = Radix::new(layout.local_states.iter().map(Vec::len).collect())?;
        let actions = Radix::new(layout.local_actions.iter().map(Vec::len).collect())?;
        let n = layout.n_agents();
        let rows = states
            .total
            .checked_mul(actions.total)
            .ok_or_else(|| Error::InvalidModel("table size overflows usize".into()))?;
        Ok(Self {
            transitions: vec![Vec::new(); rows],
            rewards: vec![0.0; rows * n],
            initial: vec![0.0; states.total],
            terminal: vec![false; states.total],
            layout,
            states,
            actions,
            discount,
        })
    }

    pub(crate) fn set_terminal(&mut self, s: usize) {
        self.terminal[s] = true;
    }

    pub(crate) fn set_initial(&mut self, s: usize, p: f64) {
        self.initial[s] = p;
    }

    pub(crate) fn push_transition(&mut self, s: usize, a: usize, next: usize, p: f64) {
        let row = s * self.actions.total + a;
        let mut v = std::mem::take(&mut self.transitions[row]);
        v.push((next, p));
        self.transitions[row] = merge_sparse(v);
    }

    pub(crate) fn set_rewards(&mut self, s: usize, a: usize, r: &[f64]) {
        let n = self.n_agents();
        let row = s * self.actions.total + a;
        self.rewards[row * n..(row + 1) * n].copy_from_slice(r);
    }

    /// Overwrites terminal rows with an absorbing zero-reward self loop.
    pub(crate) fn close_terminals(&mut self) {
        let n = self.n_agents();
        for s in 0..self.states.total {
            if !self.terminal[s] {
                continue;
            }
            for a in 0..self.actions.total {
                let row = s * self.actions.total + a;
                self.transitions[row] = vec![(s, 1.0)];
                self.rewards[row * n..(row + 1) * n].fill(0.0);
            }
        }
    }

    /// Checks row sums, reward finiteness and the initial distribution.
    pub fn validate(&self) -> Result<()> {
        for (row, entries) in self.transitions.iter().enumerate() {
            let mut sum = 0.0;
            for &(_, p) in entries {
                if !(p >= 0.0) {
                    return Err(Error::InvalidModel(format!(
                        "negative or NaN probability {p} in row {}",
                        self.row_label(row)
                    )));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvalidModel(format!(
                    "transition row {} sums to {sum}",
                    self.row_label(row)
                )));
            }
        }
        if let Some(r) = self.rewards.iter().find(|r| !r.is_finite()) {
            return Err(Error::InvalidModel(format!("non-finite reward {r}")));
        }
        let total: f64 = self.initial.iter().sum();
        if self.initial.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::InvalidModel(format!(
                "initial distribution sums to {total}"
            )));
        }
        Ok(())
    }

    fn row_label(&self, row: usize) -> String {
        let s = row / self.actions.total;
        let a = row % self.actions.total;
        format!(
            "({}; {})",
            self.state_labels(s).join(","),
            self.action_labels(a).join(",")
        )
    }

    pub fn n_agents(&self) -> usize {
        self.layout.n_agents()
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn n_states(&self) -> usize {
        self.states.total
    }

    pub fn n_joint_actions(&self) -> usize {
        self.actions.total
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    pub fn has_terminals(&self) -> bool {
        self.terminal.iter().any(|&t| t)
    }

    pub fn encode_state(&self, locals: &[usize]) -> Result<usize> {
        self.states.encode(locals)
    }

    pub fn decode_state(&self, s: usize) -> Vec<usize> {
        self.states.decode(s)
    }

    pub fn encode_action(&self, locals: &[usize]) -> Result<usize> {
        self.actions.encode(locals)
    }

    pub fn decode_action(&self, a: usize) -> Vec<usize> {
        self.actions.decode(a)
    }

    pub fn state_labels(&self, s: usize) -> Vec<String> {
        self.decode_state(s)
            .iter()
            .enumerate()
            .map(|(i, &k)| self.layout.local_states[i][k].clone())
            .collect()
    }

    pub fn action_labels(&self, a: usize) -> Vec<String> {
        self.decode_action(a)
            .iter()
            .enumerate()
            .map(|(i, &k)| self.layout.local_actions[i][k].clone())
            .collect()
    }

    /// Sparse `P(· | s, a)`.
    pub fn next_states(&self, s: usize, a: usize) -> &[(usize, f64)] {
        &self.transitions[s * self.actions.total + a]
    }

    /// `(R^1(s,a), …, R^N(s,a))`.
    pub fn rewards(&self, s: usize, a: usize) -> &[f64] {
        let n = self.n_agents();
        let row = s * self.actions.total + a;
        &self.rewards[row * n..(row + 1) * n]
    }

    /// Team-average reward `(1/N) Σ_i R^i(s,a)`.
    pub fn mean_reward(&self, s: usize, a: usize) -> f64 {
        let r = self.rewards(s, a);
        r.iter().sum::<f64>() / r.len() as f64
    }

    /// True when every non-terminal state moves to a terminal state with
    /// probability one, whatever the joint action.
    pub fn is_one_step(&self) -> bool {
        (0..self.n_states()).filter(|&s| !self.terminal[s]).all(|s| {
            (0..self.n_joint_actions()).all(|a| {
                self.next_states(s, a)
                    .iter()
                    .all(|&(ns, p)| p == 0.0 || self.terminal[ns])
            })
        })
    }

    /// States with positive initial probability.
    pub fn initial_support(&self) -> Vec<usize> {
        (0..self.n_states()).filter(|&s| self.initial[s] > 0.0).collect()
    }

    /// Non-terminal states reachable from the initial support under some
    /// joint action sequence.
    pub fn reachable_states(&self) -> Vec<usize> {
        let mut seen = vec![false; self.n_states()];
        let mut stack = self.initial_support();
        for &s in &stack {
            seen[s] = true;
        }
        while let Some(s) = stack.pop() {
            if self.terminal[s] {
                continue;
            }
            for a in 0..self.n_joint_actions() {
                for &(ns, p) in self.next_states(s, a) {
                    if p > 0.0 && !seen[ns] {
                        seen[ns] = true;
                        stack.push(ns);
                    }
                }
            }
        }
        (0..self.n_states())
            .filter(|&s| seen[s] && !self.terminal[s])
            .collect()
    }
}

fn merge_sparse(mut v: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    v.sort_by_key(|e| e.0);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(v.len());
    for (s, p) in v {
        match out.last_mut() {
            Some(last) if last.0 == s => last.1 += p,
            _ => out.push((s, p)),
        }
    }
    out.retain(|e| e.1 != 0.0);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coin() -> FiniteMG {
        let layout = Layout::homogeneous(2, &["h", "t"], &["stay", "flip"]);
        FiniteMG::tabulate(
            layout,
            0.9,
            &[(vec![0, 0], 1.0)],
            |_| false,
            |s, a| {
                let next: Vec<usize> = s.iter().zip(a).map(|(&x, &u)| x ^ u).collect();
                Outcome {
                    next: vec![(next, 1.0)],
                    rewards: vec![s[0] as f64, s[1] as f64],
                }
            },
        )
        .unwrap()
    }

    #[test]
    fn radix_round_trips() {
        let r = Radix::new(vec![3, 2, 4]).unwrap();
        for idx in 0..24 {
            assert_eq!(r.encode(&r.decode(idx)).unwrap(), idx);
        }
        assert_eq!(r.encode(&[1, 0, 0]).unwrap(), 8);
    }

    #[test]
    fn tabulated_game_has_product_spaces() {
        let g = coin();
        assert_eq!(g.n_states(), 4);
        assert_eq!(g.n_joint_actions(), 4);
        let s = g.encode_state(&[1, 0]).unwrap();
        let a = g.encode_action(&[1, 1]).unwrap();
        assert_eq!(g.next_states(s, a), &[(g.encode_state(&[0, 1]).unwrap(), 1.0)]);
        assert_eq!(g.rewards(s, a), &[1.0, 0.0]);
        assert_eq!(g.mean_reward(s, a), 0.5);
        assert_eq!(g.reachable_states().len(), 4);
        assert!(!g.is_one_step());
    }

    #[test]
    fn bad_rows_are_rejected() {
        let layout = Layout::homogeneous(1, &["x"], &["a"]);
        let err = FiniteMG::tabulate(layout, 0.5, &[(vec![0], 1.0)], |_| false, |_, _| Outcome {
            next: vec![(vec![0], 0.7)],
            rewards: vec![0.0],
        });
        assert!(matches!(err, Err(Error::InvalidModel(_))));
    }

    #[test]
    fn terminal_states_absorb_with_zero_reward() {
        let layout = Layout::homogeneous(1, &["s", "end"], &["a"]);
        let g = FiniteMG::tabulate(layout, 0.5, &[(vec![0], 1.0)], |s| s[0] == 1, |_, _| Outcome {
            next: vec![(vec![1], 1.0)],
            rewards: vec![3.0],
        })
        .unwrap();
        assert_eq!(g.next_states(1, 0), &[(1, 1.0)]);
        assert_eq!(g.rewards(1, 0), &[0.0]);
        assert!(g.is_one_step());
    }
}
