use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::LinearGame;
use super::metrics::{deep_metrics, emit_csv, MetricsLog, MetricsRecord};
use super::run::{cached_deep_run, create_file, linear_run, par_map, write_json, DeepRun, CODE_VERSION};
use super::stats::{median, summarize, RunSummary};
use crate::bandit::{
    shape_reward, BiLevelBandit, Exp3, Exp3Config, Level, SchedulerKind, DEFAULT_WINDOW,
};
use crate::consensus::{ConsensusSpec, StepSchedule};
use crate::deep_ac::DeepConfig;
use crate::envs::{self, CosineMode, CosineToyMG, Env, EnvParams};
use crate::error::{Error, Result};
use crate::exact_eval::{sharing_report, solve_mspbe, FactoredPolicy};
use crate::linear_ac::{self, ActorCriticGame, LinearACConfig, LinearRecord};
use crate::mg_core::{check_homogeneous, HomogeneityOptions};
use crate::rng::seeded;

pub const PRESETS: [&str; 6] = [
    "theorem1-suite",
    "linear-convergence",
    "toy-consensus-ablation",
    "nav-baselines",
    "bandit-ablation",
    "eta-sweep",
];

/// Gate rates swept by `eta-sweep`.
pub const ETA_SWEEP: [f64; 3] = [0.25, 0.5, 0.75];
/// Allowed gap between the trained open rate and its target.
pub const GATE_RATE_TOL: f64 = 0.1;
pub const ORACLE_DIST_TOL: f64 = 1e-2;
pub const DISAGREEMENT_TOL: f64 = 1e-6;
pub const TOY_J_THRESHOLD: f64 = 0.9;
/// Bounds on our message use relative to all-to-all communication.
pub const OBS_MSG_RATIO: f64 = 0.6;
pub const PARAM_MSG_RATIO: f64 = 0.2;

/// Overrides of a preset's default budget.
#[derive(Debug, Clone, Default)]
pub struct PresetOptions {
    pub out_dir: PathBuf,
    pub seeds: Option<Vec<u64>>,
    /// Episodes per deep run.
    pub episodes: Option<usize>,
    /// Steps per linear run.
    pub steps: Option<u64>,
}

impl PresetOptions {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Self {
            out_dir: out_dir.into(),
            ..Self::default()
        }
    }

    fn seeds(&self, default: u64) -> Vec<u64> {
        self.seeds.clone().unwrap_or_else(|| (0..default).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresetReport {
    pub preset: String,
    pub version: String,
    pub passed: bool,
    pub checks: Vec<Check>,
    /// Reported without pass/fail.
    pub notes: Vec<String>,
    pub summaries: BTreeMap<String, RunSummary>,
    pub seconds: f64,
    pub dir: PathBuf,
}

impl PresetReport {
    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

#[derive(Default)]
struct Outcome {
    checks: Vec<Check>,
    notes: Vec<String>,
    summaries: BTreeMap<String, RunSummary>,
}

/// Runs a named preset and writes its CSVs and `summary.json` under
/// `opts.out_dir/<name>`. A failing sub-run becomes a failed check naming
/// the seed.
pub fn run_preset(name: &str, opts: &PresetOptions) -> Result<PresetReport> {
    let dir = opts.out_dir.join(name);
    fs::create_dir_all(&dir)?;
    let start = Instant::now();
    let out = match name {
        "theorem1-suite" => sharing_suite(&dir)?,
        "linear-convergence" => linear_convergence(&dir, opts)?,
        "toy-consensus-ablation" => toy_consensus_ablation(&dir, opts)?,
        "nav-baselines" => nav_baselines(&dir, opts)?,
        "bandit-ablation" => bandit_ablation(&dir, opts)?,
        "eta-sweep" => eta_sweep(&dir, opts)?,
        other => {
            return Err(Error::InvalidParam(format!(
                "unknown preset '{other}' (known: {})",
                PRESETS.join(", ")
            )))
        }
    };
    let report = PresetReport {
        preset: name.to_string(),
        version: CODE_VERSION.to_string(),
        passed: !out.checks.is_empty() && out.checks.iter().all(|c| c.passed),
        checks: out.checks,
        notes: out.notes,
        summaries: out.summaries,
        seconds: start.elapsed().as_secs_f64(),
        dir: dir.clone(),
    };
    write_json(&dir.join("summary.json"), &report)?;
    Ok(report)
}

fn finite(name: &str, n: Option<usize>, mode: Option<CosineMode>) -> Result<(crate::mg_core::FiniteMG, crate::mg_core::ObservationMap)> {
    match envs::build(name, &EnvParams { n, k: None, mode })? {
        Env::Finite { mg, obs } => Ok((mg, obs)),
        Env::Continuous(_) => Err(Error::InvalidParam(format!("{name} is not finite"))),
    }
}

/// Lossless sharing on the homogeneous games, the gap on the Kuba game,
/// and the homogeneity verdicts of all of them.
fn sharing_suite(dir: &Path) -> Result<Outcome> {
    let mut out = Outcome::default();
    let mut rows = csv::Writer::from_writer(create_file(&dir.join("sharing.csv"))?);
    rows.write_record(["game", "n", "state_based", "obs_based", "obs_based_shared", "lossless", "homogeneous"])?;
    let games: [(&str, Option<usize>, Option<CosineMode>); 7] = [
        ("triangle", None, None),
        ("cosine", Some(2), Some(CosineMode::OneStep)),
        ("cosine", Some(3), Some(CosineMode::OneStep)),
        ("cosine", Some(2), Some(CosineMode::Repeated)),
        ("cosine", Some(3), Some(CosineMode::Repeated)),
        ("kuba", Some(2), None),
        ("kuba", Some(4), None),
    ];
    for (name, n, mode) in games {
        let (mg, obs) = finite(name, n, mode)?;
        let label = match mode {
            Some(m) => format!("{name}-{}-n{}", serde_json::to_value(m)?.as_str().unwrap_or("?"), mg.n_agents()),
            None => format!("{name}-n{}", mg.n_agents()),
        };
        let rep = sharing_report(&mg, &obs)?;
        let hom = check_homogeneous(&mg, &obs, HomogeneityOptions::default())?;
        rows.write_record([
            name.to_string(),
            mg.n_agents().to_string(),
            rep.state_based.to_string(),
            rep.obs_based.to_string(),
            rep.obs_based_shared.to_string(),
            rep.lossless.to_string(),
            hom.is_homogeneous().to_string(),
        ])?;
        let maxima = format!(
            "state {} / obs {} / shared {}",
            rep.state_based, rep.obs_based, rep.obs_based_shared
        );
        if name == "kuba" {
            let n = mg.n_agents() as i32;
            // max over p of p^(n/2) (1-p)^(n/2), at p = 1/2
            let shared_opt = 0.5f64.powi(n);
            out.checks.push(Check::new(format!("sharing {label}"), rep.state_based == 1.0 && (rep.obs_based_shared - shared_opt).abs() <= 1e-9, format!("{maxima}; shared optimum {shared_opt}")));
            let iii = &hom.condition_iii;
            out.checks.push(Check::new(
                format!("homogeneity {label}"),
                !iii.passed && iii.counterexample.is_some(),
                format!(
                    "condition (iii) witness: {:?}; condition (ii) holds: {}",
                    iii.counterexample, hom.condition_ii.passed
                ),
            ));
        } else {
            out.checks.push(Check::new(format!("sharing {label}"), rep.lossless, maxima));
            out.checks.push(Check::new(format!("homogeneity {label}"), hom.is_homogeneous(), format!("{} permutations", hom.permutations_checked)));
        }
    }
    rows.flush()?;
    Ok(out)
}

fn write_linear(dir: &Path, label: &str, runs: &[(u64, Vec<LinearRecord>)]) -> Result<RunSummary> {
    let mut log = MetricsLog::new(0);
    for (_, records) in runs {
        log.extend(records.iter().map(MetricsRecord::from))?;
    }
    emit_csv(create_file(&dir.join(format!("metrics_{label}.csv")))?, &log)?;
    Ok(summarize(&log))
}

/// Critics under a fixed uniform policy on the 3-agent cosine game,
/// against the projected Bellman fixed point.
fn linear_convergence(dir: &Path, opts: &PresetOptions) -> Result<Outcome> {
    let mut out = Outcome::default();
    let game = CosineToyMG::new(3, CosineMode::OneStep)?;
    let mg = game.to_finite_mg()?;
    let features = ActorCriticGame::critic_features(&game)?;
    let target = solve_mspbe(&mg, None, &FactoredPolicy::uniform(&mg), &features)?.omega;
    let cfg = LinearACConfig {
        steps: opts.steps.unwrap_or(100_000),
        critic_schedule: StepSchedule::critic_default(),
        critic_consensus: ConsensusSpec::Uniform,
        train_actor: false,
        eval_every: 10_000,
        track_oracle: true,
        ..LinearACConfig::default()
    };
    let seeds = opts.seeds(10);
    let runs = par_map(&seeds, |&s| linear_ac::train(&game, &cfg, s));
    let mut kept = Vec::new();
    for (&seed, run) in seeds.iter().zip(runs) {
        match run {
            Ok(run) => {
                let dist = run
                    .state
                    .omegas
                    .iter()
                    .map(|w| w.iter().zip(&target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
                    .fold(0.0, f64::max);
                let perp = run.records.last().map_or(f64::NAN, |r| r.omega_disagreement);
                out.checks.push(Check::new(
                    format!("seed {seed}"),
                    dist <= ORACLE_DIST_TOL && perp <= DISAGREEMENT_TOL,
                    format!("max_i |w_i - w*| = {dist:.3e} (tol {ORACLE_DIST_TOL:e}), disagreement {perp:.3e} (tol {DISAGREEMENT_TOL:e})"),
                ));
                kept.push((seed, run.records));
            }
            Err(e) => out.checks.push(Check::new(format!("seed {seed}"), false, e.to_string())),
        }
    }
    out.summaries.insert("critic".into(), write_linear(dir, "critic", &kept)?);
    Ok(out)
}

/// Adaptive-moment actor-critic on the cosine game with and without actor
/// consensus.
fn toy_consensus_ablation(dir: &Path, opts: &PresetOptions) -> Result<Outcome> {
    let mut out = Outcome::default();
    let seeds = opts.seeds(10);
    for n in [10, 50] {
        let game = LinearGame::Cosine(CosineToyMG::new(n, CosineMode::OneStep)?);
        let mut aucs = BTreeMap::new();
        for (variant, actor_consensus) in [("consensus", ConsensusSpec::Uniform), ("no-consensus", ConsensusSpec::Identity)] {
            let cfg = LinearACConfig {
                steps: opts.steps.unwrap_or(50_000),
                critic_schedule: StepSchedule::adaptive(),
                actor_schedule: StepSchedule::adaptive(),
                critic_consensus: ConsensusSpec::Uniform,
                actor_consensus,
                train_actor: true,
                eval_every: 500,
                track_oracle: false,
            };
            let label = format!("n{n}-{variant}");
            let runs = par_map(&seeds, |&s| linear_run(&game, &cfg, s));
            let mut kept = Vec::new();
            for (&seed, run) in seeds.iter().zip(runs) {
                match run {
                    Ok(r) => kept.push((seed, r)),
                    Err(e) => out.checks.push(Check::new(format!("{label} seed {seed}"), false, e.to_string())),
                }
            }
            let finals: Vec<f64> = kept.iter().map(|(_, r)| r.last().map_or(f64::NAN, |x| x.j)).collect();
            let worst = finals.iter().copied().fold(f64::INFINITY, f64::min);
            out.checks.push(Check::new(
                format!("{label} final J"),
                worst >= TOY_J_THRESHOLD,
                format!("lowest final J over {} seeds {worst:.4} (threshold {TOY_J_THRESHOLD})", finals.len()),
            ));
            aucs.insert(variant, kept.iter().map(|(_, r)| linear_ac::auc(r)).collect::<Vec<f64>>());
            out.summaries.insert(label.clone(), write_linear(dir, &label, &kept)?);
        }
        let (with, without) = (median(&aucs["consensus"]), median(&aucs["no-consensus"]));
        out.checks.push(Check::new(
            format!("n{n} consensus area"),
            matches!((with, without), (Some(a), Some(b)) if a >= b),
            format!("median area under J: with {with:?}, without {without:?}"),
        ));
    }
    Ok(out)
}

/// A deep method at desk scale.
pub fn desk_method(kind: SchedulerKind, eta: f64, episodes: Option<usize>) -> DeepConfig {
    let mut cfg = DeepConfig::method(kind, eta);
    if let Some(e) = episodes {
        cfg.episodes = e;
        cfg.eval_every = cfg.eval_every.min(e);
    }
    cfg
}

struct MethodRuns {
    runs: Vec<DeepRun>,
}

impl MethodRuns {
    fn finals(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.final_eval.mean).collect()
    }

    fn median_of(&self, f: impl Fn(&DeepRun) -> f64) -> f64 {
        median(&self.runs.iter().map(f).collect::<Vec<_>>()).unwrap_or(f64::NAN)
    }
}

/// Trains (or loads from the shared cache) every seed of a method, writes
/// its metrics, and records failures as checks.
fn deep_method(dir: &Path, opts: &PresetOptions, label: &str, cfg: &DeepConfig, out: &mut Outcome) -> Result<MethodRuns> {
    let cache = opts.out_dir.join("cache");
    let seeds = opts.seeds(4);
    let results = par_map(&seeds, |&s| cached_deep_run(&cache, label, cfg, s));
    let mut runs = Vec::new();
    for (&seed, r) in seeds.iter().zip(results) {
        match r {
            Ok(r) => runs.push(r),
            Err(e) => out.checks.push(Check::new(format!("{label} seed {seed}"), false, e.to_string())),
        }
    }
    let mut log = MetricsLog::new(cfg.env.k);
    for r in &runs {
        log.extend(deep_metrics(&r.records))?;
    }
    emit_csv(create_file(&dir.join(format!("metrics_{label}.csv")))?, &log)?;
    out.summaries.insert(label.to_string(), summarize(&log));
    Ok(MethodRuns { runs })
}

fn method_label(kind: SchedulerKind, eta: f64) -> String {
    format!("{kind}-eta{eta}")
}

fn nav_baselines(dir: &Path, opts: &PresetOptions) -> Result<Outcome> {
    let mut out = Outcome::default();
    let mut m = BTreeMap::new();
    for (name, kind) in [
        ("ours", SchedulerKind::Bandit),
        ("full", SchedulerKind::Full),
        ("il", SchedulerKind::None),
        ("random", SchedulerKind::Random),
    ] {
        let cfg = desk_method(kind, 0.5, opts.episodes);
        let runs = deep_method(dir, opts, &method_label(kind, 0.5), &cfg, &mut out)?;
        m.insert(name, runs);
    }
    let med = |k: &str| median(&m[k].finals()).unwrap_or(f64::NAN);
    let (ours, full, il, random) = (med("ours"), med("full"), med("il"), med("random"));
    out.checks.push(Check::new("full beats il", full > il, format!("median final return full {full:.4}, il {il:.4}")));
    out.checks.push(Check::new("ours beats il", ours > il, format!("median final return ours {ours:.4}, il {il:.4}")));
    let obs_ratio = m["ours"].median_of(|r| r.counters.obs_msgs as f64) / m["full"].median_of(|r| r.counters.obs_msgs as f64);
    let param_ratio =
        m["ours"].median_of(|r| r.counters.param_msgs as f64) / m["full"].median_of(|r| r.counters.param_msgs as f64);
    out.checks.push(Check::new(
        "observation messages",
        obs_ratio <= OBS_MSG_RATIO,
        format!("ours/full = {obs_ratio:.4} (bound {OBS_MSG_RATIO})"),
    ));
    out.checks.push(Check::new(
        "parameter messages",
        param_ratio <= PARAM_MSG_RATIO,
        format!("ours/full = {param_ratio:.4} (bound {PARAM_MSG_RATIO})"),
    ));
    out.notes.push(format!(
        "median final return: full {full:.4}, ours {ours:.4}, random {random:.4}, il {il:.4}; \
         full >= ours >= random >= il: {}",
        full >= ours && ours >= random && random >= il
    ));
    Ok(out)
}

fn eta_sweep(dir: &Path, opts: &PresetOptions) -> Result<Outcome> {
    let mut out = Outcome::default();
    for eta in ETA_SWEEP {
        let cfg = desk_method(SchedulerKind::Bandit, eta, opts.episodes);
        let m = deep_method(dir, opts, &method_label(SchedulerKind::Bandit, eta), &cfg, &mut out)?;
        let rates: Vec<f64> = m.runs.iter().map(|r| r.final_eval.open_rate).collect();
        let mean = rates.iter().sum::<f64>() / rates.len().max(1) as f64;
        out.checks.push(Check::new(
            format!("gate rate {eta}"),
            !rates.is_empty() && (mean - eta).abs() <= GATE_RATE_TOL,
            format!("mean open rate {mean:.4} over seeds {rates:.3?} (target {eta} ± {GATE_RATE_TOL})"),
        ));
        let k = cfg.env.k;
        let by_rank: Vec<f64> = (0..k)
            .map(|r| m.runs.iter().map(|x| x.final_eval.open_by_rank[r]).sum::<f64>() / m.runs.len().max(1) as f64)
            .collect();
        out.notes.push(format!("eta {eta}: open rate by distance rank {by_rank:.3?}"));
    }
    Ok(out)
}

fn bandit_ablation(dir: &Path, opts: &PresetOptions) -> Result<Outcome> {
    let mut out = Outcome::default();
    out.checks.extend(bandit_behavior(0)?);
    let mut notes = Vec::new();
    for kind in [SchedulerKind::Bandit, SchedulerKind::Random, SchedulerKind::Rule] {
        let cfg = desk_method(kind, 0.5, opts.episodes);
        let m = deep_method(dir, opts, &method_label(kind, 0.5), &cfg, &mut out)?;
        notes.push(format!(
            "{kind}: median final return {:.4}, median parameter messages {}",
            median(&m.finals()).unwrap_or(f64::NAN),
            m.median_of(|r| r.counters.param_msgs as f64)
        ));
    }
    out.notes.extend(notes);
    Ok(out)
}

/// Synthetic checks of the bandit layer: a stationary best arm, a
/// penalised high level, and the range of every shaped reward.
pub fn bandit_behavior(seed: u64) -> Result<Vec<Check>> {
    let mut rng = seeded(seed);
    let mut checks = Vec::new();

    let mut b = Exp3::new(5, Exp3Config::default())?;
    for _ in 0..2000 {
        let arm = b.sample(&mut rng);
        b.update(arm, if arm == 3 { 1.0 } else { -1.0 })?;
    }
    let p = b.probabilities()[3];
    checks.push(Check::new("stationary best arm", p >= 0.5, format!("best arm probability {p:.4} after 2000 rounds")));

    let mut shaped = Vec::new();
    let mut high = BiLevelBandit::new(0, 4, DEFAULT_WINDOW, Exp3Config::default())?;
    let mut window: Vec<f64> = Vec::new();
    let mut below_at = None;
    for round in 0..2000 {
        let d = high.decide(&mut rng);
        let base = if window.is_empty() { 0.0 } else { window.iter().sum::<f64>() / window.len() as f64 };
        let g = if d.communicates() { base - 1.0 } else { base + 1.0 };
        window.push(g);
        if window.len() > DEFAULT_WINDOW {
            window.remove(0);
        }
        let fb = high.feedback(&d, g)?;
        shaped.push(fb.r1);
        shaped.extend(fb.r2);
        if below_at.is_none() && high.p_communicate() < 0.2 {
            below_at = Some(round + 1);
        }
    }
    checks.push(Check::new(
        "penalised communication",
        below_at.is_some(),
        format!("communicate probability below 0.2 after {below_at:?} rounds, final {:.4}", high.p_communicate()),
    ));

    for _ in 0..20_000 {
        let len = rng.random_range(1..=DEFAULT_WINDOW);
        let scale = 10f64.powf(rng.random_range(-3.0..3.0));
        let returns: Vec<f64> = (0..len).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
        let arms: Vec<usize> = (0..len).map(|_| rng.random_range(0..2)).collect();
        let g = returns[len - 1];
        shaped.push(shape_reward(&returns, &[], g, Level::Low));
        shaped.push(shape_reward(&returns, &arms, g, Level::High));
    }
    let bad = shaped.iter().filter(|r| !(**r > -1.0 && **r < 1.0)).count();
    checks.push(Check::new(
        "shaped reward range",
        bad == 0,
        format!("{bad} of {} shaped rewards outside (-1, 1)", shaped.len()),
    ));
    Ok(checks)
}
