//! Gated observation-action sharing with set-pooled critics, deterministic
//! actors and scheduled parameter consensus on the navigation world.
//!
//! Each agent owns a gate that decides, per neighbor and per step, whether
//! to receive that neighbor's observation and action; a critic that pools
//! whatever it received; and an actor. Before every episode a
//! [`crate::bandit::Scheduler`] may average critic and actor parameters
//! between agents.

mod agent;
mod gate;
mod memory;
mod topology;
mod train;

pub use agent::{
    actor_loss_and_grads, critic_element, embeddings, open_probabilities, td_loss_and_grads, td_selection,
    ActorSample, AgentNets, CommMode, Selection, TdOutput, TdSample, Team,
};
pub use gate::{
    gate_noise, gate_value, open_prob, sample_gates, Gate, GateCache, GateConfig, GateMode, EMBED_DIM, OPEN,
};
pub use memory::{ReplayMemory, Transition};
pub use topology::{MessageCounters, Topology};
pub use train::{
    evaluate_team, run_episode, save_team, train_deep, write_bandit_csv, write_episode_csv, BanditRow,
    DeepConfig, DeepOutcome, EpisodeRecord, EpisodeStats, EvalSummary, RunRngs,
};

#[cfg(test)]
mod tests;
