//! Scheduling of parameter consensus between agents: a two-level
//! adversarial bandit per agent (whether to exchange, and with whom) driven
//! by shaped episodic returns, plus random, rule-based, all-to-all and
//! no-consensus baselines.

mod bilevel;
mod exp3;
mod scheduler;
mod shaping;

pub use bilevel::{BiLevelBandit, Decision, Feedback, DEFAULT_WINDOW};
pub use exp3::{Exp3, Exp3Config};
pub use scheduler::{
    rule_based_select, EpisodeSchedule, ParamPool, Scheduler, SchedulerConfig, SchedulerKind,
};
pub use shaping::{mean_std, shape_reward, Level, COMMUNICATE, SKIP, STD_FLOOR};

#[cfg(test)]
mod tests;
