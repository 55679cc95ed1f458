//! Finite Markov games, agent permutations, observation maps and the
//! homogeneity verifier.

mod format;
mod game;
mod homogeneity;
mod obs;
mod perm;

pub use format::{GameFile, FORMAT_VERSION};
pub use game::{FiniteMG, Layout, Outcome, ROW_SUM_TOL};
pub use homogeneity::{
    check_homogeneous, check_observation_identity, permute_agents, ConditionResult,
    Counterexample, HomogeneityOptions, HomogeneityReport, ObservationIdentityReport,
    PermutationSet, DEFAULT_BUDGET, TABLE_TOL,
};
pub use obs::ObservationMap;
pub use perm::Permutation;
