//! Decentralized actor-critic with parameter consensus for homogeneous
//! Markov games.
//!
//! The crate has three layers:
//!
//! * exact tools for small finite games: [`mg_core`] (models, permutations,
//!   the homogeneity verifier), [`exact_eval`] (policy evaluation, optimality
//!   oracles, the MSPBE solver) and [`envs`] (bundled games);
//! * the linear consensus actor-critic in [`linear_ac`], with consensus
//!   machinery and assumption validators in [`consensus`];
//! * the communication-efficient deep variant: [`nets`] (small networks with
//!   hand-written gradients), [`deep_ac`] (gated observation-action sharing)
//!   and [`bandit`] (bi-level parameter-consensus scheduling).
//!
//! [`harness`] ties everything into presets and metric files.

pub mod bandit;
pub mod consensus;
pub mod deep_ac;
pub mod envs;
pub mod error;
pub mod exact_eval;
pub mod harness;
pub mod linalg;
pub mod linear_ac;
pub mod mg_core;
pub mod nets;
pub mod rng;

pub use error::{Error, Result};
