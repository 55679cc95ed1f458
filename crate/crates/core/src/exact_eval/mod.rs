//! Exact policy evaluation, the projected Bellman fixed point for linear
//! critics, and brute-force optima over policy classes.

mod evaluate;
mod mspbe;
mod optimum;
mod policy;

pub use evaluate::{evaluate, EvalResult};
pub use mspbe::{solve_mspbe, solve_with_eval, MspbeSolution, MSPBE_RESIDUAL_TOL};
pub use optimum::{
    brute_force_optimum, sharing_report, sharing_report_with_budget, Optimum, PolicyClass,
    SharingReport, GRID_STEP, REFINE_TOL,
};
pub use policy::{FactoredPolicy, PolicyInput, ROW_TOL};

#[cfg(test)]
mod tests;
