use std::fmt;

use crate::error::{Error, Result};

/// A permutation of agent indices.
///
/// Convention used everywhere in the crate: applying `m` to an ordered list
/// `x` yields `y` with `y[m(i)] = x[i]`, i.e. the entry owned by agent `i`
/// moves to slot `m(i)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Permutation {
    map: Vec<usize>,
}

impl Permutation {
    pub fn new(map: Vec<usize>) -> Result<Self> {
        let n = map.len();
        let mut seen = vec![false; n];
        for &m in &map {
            if m >= n || seen[m] {
                return Err(Error::InvalidParam(format!(
                    "{map:?} is not a bijection on 0..{n}"
                )));
            }
            seen[m] = true;
        }
        Ok(Self { map })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            map: (0..n).collect(),
        }
    }

    /// Swaps agents `i` and `j`.
    pub fn transposition(n: usize, i: usize, j: usize) -> Result<Self> {
        if i >= n || j >= n {
            return Err(Error::InvalidParam(format!(
                "transposition ({i} {j}) out of range for {n} agents"
            )));
        }
        let mut map: Vec<usize> = (0..n).collect();
        map.swap(i, j);
        Ok(Self { map })
    }

    /// All `n(n-1)/2` transpositions, in lexicographic order of `(i, j)`.
    pub fn transpositions(n: usize) -> Vec<Self> {
        let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in (i + 1)..n {
                let mut map: Vec<usize> = (0..n).collect();
                map.swap(i, j);
                out.push(Self { map });
            }
        }
        out
    }

    /// All `n!` permutations in lexicographic order.
    pub fn all(n: usize) -> Vec<Self> {
        let mut out = Vec::new();
        let mut cur: Vec<usize> = (0..n).collect();
        loop {
            out.push(Self { map: cur.clone() });
            // next lexicographic permutation
            let Some(k) = (0..n.saturating_sub(1)).rev().find(|&k| cur[k] < cur[k + 1]) else {
                break;
            };
            let l = (k + 1..n).rev().find(|&l| cur[k] < cur[l]).unwrap();
            cur.swap(k, l);
            cur[k + 1..].reverse();
        }
        out
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Image of agent `i`.
    pub fn image(&self, i: usize) -> usize {
        self.map[i]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.map
    }

    pub fn is_identity(&self) -> bool {
        self.map.iter().enumerate().all(|(i, &m)| i == m)
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.map.len()];
        for (i, &m) in self.map.iter().enumerate() {
            inv[m] = i;
        }
        Self { map: inv }
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        if self.len() != other.len() {
            return Err(Error::Dimension(format!(
                "cannot compose permutations of {} and {} agents",
                self.len(),
                other.len()
            )));
        }
        Ok(Self {
            map: other.map.iter().map(|&k| self.map[k]).collect(),
        })
    }

    /// Permutes an ordered list: `out[m(i)] = x[i]`.
    pub fn apply<T: Clone>(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.map.len() {
            return Err(Error::Dimension(format!(
                "list of length {} permuted by a permutation of {} agents",
                x.len(),
                self.map.len()
            )));
        }
        let mut out = x.to_vec();
        for (i, v) in x.iter().enumerate() {
            out[self.map[i]] = v.clone();
        }
        Ok(out)
    }
}

impl fmt::Display for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, m) in self.map.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{i}->{m}")?;
        }
        write!(f, "]")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identity_leaves_list_alone() {
        let id = Permutation::identity(3);
        assert_eq!(id.apply(&['a', 'b', 'c']).unwrap(), vec!['a', 'b', 'c']);
    }

    #[test]
    fn transposition_swaps_first_two() {
        let t = Permutation::transposition(3, 0, 1).unwrap();
        assert_eq!(t.apply(&['a', 'b', 'c']).unwrap(), vec!['b', 'a', 'c']);
        let twice = t.apply(&t.apply(&['a', 'b', 'c']).unwrap()).unwrap();
        assert_eq!(twice, vec!['a', 'b', 'c']);
    }

    #[test]
    fn convention_moves_entry_to_image_slot() {
        // 0->2, 1->0, 2->1
        let m = Permutation::new(vec![2, 0, 1]).unwrap();
        assert_eq!(m.apply(&["x0", "x1", "x2"]).unwrap(), vec!["x1", "x2", "x0"]);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let t = Permutation::identity(3);
        assert!(matches!(t.apply(&[1, 2]), Err(Error::Dimension(_))));
        assert!(Permutation::new(vec![0, 0, 1]).is_err());
    }

    #[test]
    fn enumerations_have_expected_sizes() {
        assert_eq!(Permutation::all(4).len(), 24);
        assert_eq!(Permutation::transpositions(4).len(), 6);
        assert_eq!(Permutation::all(1).len(), 1);
    }

    fn perm_strategy(n: usize) -> impl Strategy<Value = Permutation> {
        Just((0..n).collect::<Vec<_>>())
            .prop_shuffle()
            .prop_map(|v| Permutation::new(v).unwrap())
    }

    proptest! {
        #[test]
        fn group_closure(a in perm_strategy(6), b in perm_strategy(6), xs in prop::collection::vec(any::<i32>(), 6)) {
            let ab = a.compose(&b).unwrap();
            // composition is a valid permutation and acts as b then a
            prop_assert!(Permutation::new(ab.as_slice().to_vec()).is_ok());
            prop_assert_eq!(ab.apply(&xs).unwrap(), a.apply(&b.apply(&xs).unwrap()).unwrap());
            // inverse undoes
            prop_assert!(a.compose(&a.inverse()).unwrap().is_identity());
            prop_assert_eq!(a.inverse().apply(&a.apply(&xs).unwrap()).unwrap(), xs);
        }
    }
}
