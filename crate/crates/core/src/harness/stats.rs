use rand::Rng;
use serde::{Deserialize, Serialize};

use super::metrics::MetricsLog;
use crate::rng::seeded;

pub const BOOTSTRAP_RESAMPLES: usize = 2000;
pub const CI_LEVEL: f64 = 0.95;

pub fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

/// Percentile bootstrap interval for the median.
pub fn bootstrap_ci(xs: &[f64], level: f64, resamples: usize, seed: u64) -> Option<(f64, f64)> {
    if xs.is_empty() || resamples == 0 {
        return None;
    }
    let mut rng = seeded(seed);
    let mut meds: Vec<f64> = (0..resamples)
        .map(|_| {
            let draw: Vec<f64> = (0..xs.len()).map(|_| xs[rng.random_range(0..xs.len())]).collect();
            median(&draw).expect("nonempty resample")
        })
        .collect();
    meds.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    let at = |q: f64| meds[((q * resamples as f64).floor() as usize).min(resamples - 1)];
    Some((at(tail), at(1.0 - tail)))
}

/// Median and bootstrap interval of per-seed values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub median: Option<f64>,
    pub mean: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
}

impl Summary {
    pub fn of(xs: &[f64]) -> Self {
        let ci = bootstrap_ci(xs, CI_LEVEL, BOOTSTRAP_RESAMPLES, 0);
        Self {
            count: xs.len(),
            median: median(xs),
            mean: (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64),
            ci_low: ci.map(|c| c.0),
            ci_high: ci.map(|c| c.1),
        }
    }
}

/// Summaries of the final row of every seed in a metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seeds: Vec<u64>,
    pub final_return: Summary,
    pub obs_msgs: Summary,
    pub param_msgs: Summary,
}

pub fn summarize(log: &MetricsLog) -> RunSummary {
    let finals = log.finals();
    let pick = |f: &dyn Fn(&super::MetricsRecord) -> f64| Summary::of(&finals.values().map(|r| f(r)).collect::<Vec<_>>());
    RunSummary {
        seeds: finals.keys().copied().collect(),
        final_return: pick(&|r| r.ret),
        obs_msgs: pick(&|r| r.obs_msgs as f64),
        param_msgs: pick(&|r| r.param_msgs as f64),
    }
}
