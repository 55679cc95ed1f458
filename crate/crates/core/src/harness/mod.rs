//! Experiment configuration, multi-seed runs, presets and metric files.

mod config;
mod metrics;
mod presets;
mod run;
mod stats;

pub use config::{Algorithm, EnvSpec, ExperimentConfig, LinearGame};
pub use metrics::{deep_metrics, emit_csv, read_csv, MetricsLog, MetricsRecord};
pub use presets::{
    bandit_behavior, desk_method, run_preset, Check, PresetOptions, PresetReport, DISAGREEMENT_TOL, ETA_SWEEP,
    GATE_RATE_TOL, OBS_MSG_RATIO, ORACLE_DIST_TOL, PARAM_MSG_RATIO, PRESETS, TOY_J_THRESHOLD,
};
pub use run::{cached_deep_run, linear_run, par_map, run_experiment, DeepRun, ExperimentReport, CODE_VERSION};
pub use stats::{bootstrap_ci, median, summarize, RunSummary, Summary, BOOTSTRAP_RESAMPLES, CI_LEVEL};

#[cfg(test)]
mod tests;
