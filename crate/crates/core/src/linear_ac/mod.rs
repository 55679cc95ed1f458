//! Decentralised linear actor-critic: per-agent TD critics and
//! softmax-linear actors, each followed by a consensus round.

mod agent;
mod features;
mod game;
mod train;

pub use agent::{actor_step, critic_step, score, softmax, td_error, LinearACState, Stepper, Transition};
pub use features::{FeatureMap, RawFeatureFn, Row};
pub use game::{sample_categorical, ActorCriticGame, PolicyFn, TabularGame};
pub use train::{auc, train, write_csv, LinearACConfig, LinearRecord, TrainOutcome, DIVERGENCE_LIMIT};
