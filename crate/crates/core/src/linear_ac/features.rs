use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::consensus::Assumption;
use crate::error::{Error, Result};
use crate::linalg;

/// Raw feature function over (joint state locals, joint action locals).
pub type RawFeatureFn = Arc<dyn Fn(&[usize], &[usize]) -> Vec<f64> + Send + Sync>;

/// One (joint state, joint action) row, both as local index tuples.
pub type Row = (Vec<usize>, Vec<usize>);

/// Linear critic features `φ(s, a)`, optionally restricted to a subset of
/// the raw coordinates chosen so that `Φ` has full column rank.
#[derive(Clone)]
pub struct FeatureMap {
    raw_dim: usize,
    kept: Vec<usize>,
    f: RawFeatureFn,
}

impl fmt::Debug for FeatureMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FeatureMap")
            .field("raw_dim", &self.raw_dim)
            .field("kept", &self.kept)
            .finish()
    }
}

impl FeatureMap {
    pub fn new(raw_dim: usize, f: RawFeatureFn) -> Self {
        Self {
            raw_dim,
            kept: (0..raw_dim).collect(),
            f,
        }
    }

    /// One indicator per listed row; unlisted rows map to zero.
    pub fn tabular(rows: &[Row]) -> Self {
        let index: std::collections::HashMap<Row, usize> = rows
            .iter()
            .enumerate()
            .map(|(k, r)| (r.clone(), k))
            .collect();
        let dim = rows.len();
        Self::new(
            dim,
            Arc::new(move |s: &[usize], a: &[usize]| {
                let mut phi = vec![0.0; dim];
                if let Some(&k) = index.get(&(s.to_vec(), a.to_vec())) {
                    phi[k] = 1.0;
                }
                phi
            }),
        )
    }

    pub fn dim(&self) -> usize {
        self.kept.len()
    }

    pub fn raw_dim(&self) -> usize {
        self.raw_dim
    }

    /// Raw coordinates retained by [`FeatureMap::reduce`].
    pub fn kept_columns(&self) -> &[usize] {
        &self.kept
    }

    pub fn raw(&self, s: &[usize], a: &[usize]) -> Result<Vec<f64>> {
        let v = (self.f)(s, a);
        if v.len() != self.raw_dim {
            return Err(Error::Dimension(format!(
                "feature function returned {} values, expected {}",
                v.len(),
                self.raw_dim
            )));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("feature value".into()));
        }
        Ok(v)
    }

    pub fn phi(&self, s: &[usize], a: &[usize]) -> Result<Vec<f64>> {
        let raw = self.raw(s, a)?;
        if self.kept.len() == self.raw_dim {
            return Ok(raw);
        }
        Ok(self.kept.iter().map(|&k| raw[k]).collect())
    }

    /// `Φ` restricted to the given rows.
    pub fn matrix(&self, rows: &[Row]) -> Result<DMatrix<f64>> {
        let mut m = DMatrix::zeros(rows.len(), self.dim());
        for (r, (s, a)) in rows.iter().enumerate() {
            for (c, x) in self.phi(s, a)?.into_iter().enumerate() {
                m[(r, c)] = x;
            }
        }
        Ok(m)
    }

    /// Keeps a maximal set of linearly independent columns over `rows`
    /// (greedy, left to right). Constant coordinates that duplicate one
    /// another on stateless games are dropped this way.
    pub fn reduce(&self, rows: &[Row]) -> Result<Self> {
        let full = Self::new(self.raw_dim, self.f.clone());
        let m = full.matrix(rows)?;
        let kept = linalg::independent_columns(&m);
        if kept.is_empty() {
            return Err(Error::Assumption {
                assumption: Assumption::Features,
                detail: "every feature column vanishes on the given rows".into(),
            });
        }
        if kept.len() < self.raw_dim {
            log::info!(
                "feature reduction kept {} of {} raw columns",
                kept.len(),
                self.raw_dim
            );
        }
        Ok(Self {
            raw_dim: self.raw_dim,
            kept,
            f: self.f.clone(),
        })
    }

    /// Fails with a feature-assumption error unless `Φ` over `rows` has
    /// full column rank.
    pub fn check_rank(&self, rows: &[Row]) -> Result<()> {
        let m = self.matrix(rows)?;
        let r = linalg::rank(&m);
        if r < self.dim() {
            return Err(Error::Assumption {
                assumption: Assumption::Features,
                detail: format!("feature matrix has rank {r} < {} columns", self.dim()),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dup_map() -> FeatureMap {
        // third column duplicates the first
        FeatureMap::new(
            3,
            Arc::new(|s: &[usize], a: &[usize]| vec![s[0] as f64, a[0] as f64, s[0] as f64]),
        )
    }

    fn rows() -> Vec<Row> {
        vec![(vec![1], vec![0]), (vec![1], vec![1]), (vec![2], vec![0])]
    }

    #[test]
    fn rank_check_rejects_duplicates() {
        let err = dup_map().check_rank(&rows()).unwrap_err();
        assert!(matches!(
            err,
            Error::Assumption {
                assumption: Assumption::Features,
                ..
            }
        ));
    }

    #[test]
    fn reduce_drops_dependent_columns() {
        let r = dup_map().reduce(&rows()).unwrap();
        assert_eq!(r.kept_columns(), &[0, 1]);
        assert_eq!(r.phi(&[2], &[1]).unwrap(), vec![2.0, 1.0]);
        r.check_rank(&rows()).unwrap();
    }

    #[test]
    fn tabular_is_identity_on_its_rows() {
        let rs = rows();
        let m = FeatureMap::tabular(&rs).matrix(&rs).unwrap();
        assert_eq!(m, DMatrix::identity(3, 3));
    }

    #[test]
    fn wrong_length_is_an_error() {
        let f = FeatureMap::new(2, Arc::new(|_: &[usize], _: &[usize]| vec![1.0]));
        assert!(f.phi(&[0], &[0]).is_err());
    }
}
