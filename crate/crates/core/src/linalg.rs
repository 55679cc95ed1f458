//! Dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Condition numbers above this are logged as warnings.
pub const COND_WARN: f64 = 1e12;

/// Relative singular-value threshold below which a matrix counts as
/// rank deficient.
pub const RANK_RTOL: f64 = 1e-10;

/// 2-norm condition number from the singular values.
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let sv = a.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Solves `a x = b` by LU with partial pivoting.
///
/// Fails on numerically singular systems; warns when the condition number
/// exceeds [`COND_WARN`].
pub fn solve(a: &DMatrix<f64>, b: &DVector<f64>, what: &str) -> Result<DVector<f64>> {
    if a.nrows() != a.ncols() || a.nrows() != b.len() {
        return Err(Error::Dimension(format!(
            "{what}: {}x{} system with rhs of length {}",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    if a.nrows() == 0 {
        return Ok(DVector::zeros(0));
    }
    let cond = condition_number(a);
    if !cond.is_finite() || cond * f64::EPSILON * (a.nrows() as f64) > 1.0 {
        return Err(Error::Singular(format!("{what}: condition number {cond:e}")));
    }
    if cond > COND_WARN {
        log::warn!("{what}: ill-conditioned system (condition number {cond:e})");
    }
    a.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::Singular(format!("{what}: zero pivot")))
}

/// Numerical rank from singular values relative to the largest one.
pub fn rank(m: &DMatrix<f64>) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().singular_values();
    let max = sv.max();
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > max * RANK_RTOL).count()
}

/// Greedy left-to-right selection of linearly independent columns
/// (modified Gram-Schmidt with re-orthogonalisation). Returns the kept
/// column indices.
pub fn independent_columns(m: &DMatrix<f64>) -> Vec<usize> {
    let scale = m.iter().fold(0.0f64, |acc, x| acc.max(x.abs())).max(1e-300);
    let tol = RANK_RTOL.sqrt() * scale * (m.nrows() as f64).sqrt();
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut kept = Vec::new();
    for j in 0..m.ncols() {
        let mut v = m.column(j).into_owned();
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&v);
                v.axpy(-c, q, 1.0);
            }
        }
        let norm = v.norm();
        if norm > tol {
            basis.push(v / norm);
            kept.push(j);
        }
    }
    kept
}

/// Largest absolute eigenvalue of a symmetric matrix (its spectral norm).
pub fn spectral_norm_sym(m: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(m.clone());
    eig.eigenvalues.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
}

/// Stationary distribution `d = d P`, `Σ d = 1` of a row-stochastic matrix.
/// Fails when the solution is not unique (several recurrent classes).
pub fn stationary_distribution(p: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = p.nrows();
    // [(I - P)^T; 1^T] d = [0; 1]
    let mut a = DMatrix::zeros(n + 1, n);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = if i == j { 1.0 } else { 0.0 } - p[(j, i)];
        }
        a[(n, i)] = 1.0;
    }
    let mut b = DVector::zeros(n + 1);
    b[n] = 1.0;
    if rank(&a) < n {
        return Err(Error::Singular(
            "stationary distribution is not unique (multiple recurrent classes)".into(),
        ));
    }
    let ata = a.transpose() * &a;
    let atb = a.transpose() * b;
    let mut d = solve(&ata, &atb, "stationary distribution")?;
    for x in d.iter_mut() {
        if *x < 0.0 && *x > -1e-12 {
            *x = 0.0;
        }
    }
    let total = d.sum();
    Ok(d / total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn solves_small_system() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let b = DVector::from_vec(vec![3.0, 5.0]);
        let x = solve(&a, &b, "test").unwrap();
        assert_relative_eq!(x[0], 0.8, epsilon = 1e-12);
        assert_relative_eq!(x[1], 1.4, epsilon = 1e-12);
    }

    #[test]
    fn singular_system_errors() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let b = DVector::from_vec(vec![1.0, 2.0]);
        assert!(matches!(solve(&a, &b, "test"), Err(Error::Singular(_))));
    }

    #[test]
    fn independent_columns_drop_duplicates() {
        // columns: c0, 2*c0, c2, c0+c2
        let m = DMatrix::from_row_slice(3, 4, &[1.0, 2.0, 0.0, 1.0, 1.0, 2.0, 1.0, 2.0, 0.0, 0.0, 1.0, 1.0]);
        assert_eq!(independent_columns(&m), vec![0, 2]);
        assert_eq!(rank(&m), 2);
    }

    #[test]
    fn two_state_chain_stationary() {
        let p = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.5, 0.5]);
        let d = stationary_distribution(&p).unwrap();
        assert_relative_eq!(d[0], 5.0 / 6.0, epsilon = 1e-12);
        assert_relative_eq!(d[1], 1.0 / 6.0, epsilon = 1e-12);
    }

    #[test]
    fn reducible_chain_is_rejected() {
        let p = DMatrix::identity(2, 2);
        assert!(stationary_distribution(&p).is_err());
    }
}
