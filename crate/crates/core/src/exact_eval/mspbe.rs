use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::evaluate::{evaluate, EvalResult};
use super::policy::FactoredPolicy;
use crate::error::Result;
use crate::linalg;
use crate::linear_ac::{FeatureMap, Row};
use crate::mg_core::{FiniteMG, ObservationMap};

/// Residual bound for a successful fixed-point solve.
pub const MSPBE_RESIDUAL_TOL: f64 = 1e-8;

/// Fixed point of the projected Bellman operator for linear features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MspbeSolution {
    pub omega: Vec<f64>,
    /// `‖Φᵀ D (T(Φω) - Φω)‖ = ‖b - A ω‖`.
    pub residual: f64,
}

/// Solves `A ω = b` with `A = Φᵀ D (I - γ P^π) Φ` and `b = Φᵀ D r̄`, where
/// `D` is the state-action weighting from [`evaluate`]. Terminal states
/// contribute zero continuation value.
///
/// Fails with a feature-assumption error when `Φ` restricted to the
/// weighted rows is rank deficient.
pub fn solve_mspbe(
    mg: &FiniteMG,
    obs: Option<&ObservationMap>,
    policy: &FactoredPolicy,
    features: &FeatureMap,
) -> Result<MspbeSolution> {
    let eval = evaluate(mg, obs, policy)?;
    solve_with_eval(mg, obs, policy, features, &eval)
}

pub(crate) fn weighted_rows(mg: &FiniteMG, eval: &EvalResult) -> Vec<(usize, usize)> {
    let n_a = mg.n_joint_actions();
    (0..mg.n_states())
        .flat_map(|s| (0..n_a).map(move |a| (s, a)))
        .filter(|&(s, a)| eval.d(s, a) > 0.0)
        .collect()
}

pub fn solve_with_eval(
    mg: &FiniteMG,
    obs: Option<&ObservationMap>,
    policy: &FactoredPolicy,
    features: &FeatureMap,
    eval: &EvalResult,
) -> Result<MspbeSolution> {
    let n_a = mg.n_joint_actions();
    let gamma = mg.discount();
    let k = features.dim();
    let support = weighted_rows(mg, eval);
    let rows: Vec<Row> = support
        .iter()
        .map(|&(s, a)| (mg.decode_state(s), mg.decode_action(a)))
        .collect();
    features.check_rank(&rows)?;

    // expected next feature ψ(s') = Σ_a' π(a'|s') φ(s', a'), cached per state
    let mut psi: Vec<Option<DVector<f64>>> = vec![None; mg.n_states()];
    let mut a_mat = DMatrix::<f64>::zeros(k, k);
    let mut b = DVector::<f64>::zeros(k);
    for (&(s, a), (ls, la)) in support.iter().zip(&rows) {
        let w = eval.d(s, a);
        let phi = DVector::from_vec(features.phi(ls, la)?);
        let mut next = DVector::<f64>::zeros(k);
        for &(ns, p) in mg.next_states(s, a) {
            if mg.is_terminal(ns) || p == 0.0 {
                continue;
            }
            if psi[ns].is_none() {
                let pi = policy.joint(mg, obs, ns);
                let lns = mg.decode_state(ns);
                let mut acc = DVector::<f64>::zeros(k);
                for (na, &pa) in pi.iter().enumerate().take(n_a) {
                    if pa > 0.0 {
                        acc += DVector::from_vec(features.phi(&lns, &mg.decode_action(na))?) * pa;
                    }
                }
                psi[ns] = Some(acc);
            }
            next += psi[ns].as_ref().expect("cached") * p;
        }
        let diff = &phi - next * gamma;
        a_mat += &phi * diff.transpose() * w;
        b += &phi * (w * mg.mean_reward(s, a));
    }
    let omega = linalg::solve(&a_mat, &b, "projected Bellman fixed point")?;
    let residual = (&b - &a_mat * &omega).norm();
    Ok(MspbeSolution {
        omega: omega.iter().copied().collect(),
        residual,
    })
}
