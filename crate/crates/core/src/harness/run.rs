use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{Algorithm, ExperimentConfig, LinearGame};
use super::metrics::{deep_metrics, emit_csv, MetricsLog, MetricsRecord};
use super::stats::{summarize, RunSummary};
use crate::deep_ac::{
    save_team, train_deep, write_bandit_csv, write_episode_csv, DeepConfig, EpisodeRecord, EvalSummary,
    MessageCounters,
};
use crate::error::{Error, Result};
use crate::linear_ac::{self, LinearACConfig, LinearRecord};

/// Version string recorded in every run directory.
pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Maps `f` over `items` on up to `available_parallelism` threads,
/// keeping input order.
pub fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(items.len())
        .max(1);
    if workers == 1 {
        return items.iter().map(f).collect();
    }
    let per = items.len().div_ceil(workers);
    let mut out: Vec<Option<R>> = (0..items.len()).map(|_| None).collect();
    let f = &f;
    std::thread::scope(|s| {
        for (xs, slots) in items.chunks(per).zip(out.chunks_mut(per)) {
            s.spawn(move || {
                for (x, slot) in xs.iter().zip(slots) {
                    *slot = Some(f(x));
                }
            });
        }
    });
    out.into_iter().map(|r| r.expect("every slot filled")).collect()
}

pub(crate) fn create_file(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(create_file(path)?, value)?;
    Ok(())
}

#[derive(Serialize)]
struct RunInfo<'a> {
    name: &'a str,
    version: &'a str,
    algorithm: Algorithm,
    seeds: &'a [u64],
}

/// Files and summary of one finished experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub dir: PathBuf,
    pub summary: RunSummary,
    pub log: MetricsLog,
}

pub fn linear_run(game: &LinearGame, cfg: &LinearACConfig, seed: u64) -> Result<Vec<LinearRecord>> {
    let out = match game {
        LinearGame::Cosine(g) => linear_ac::train(g, cfg, seed)?,
        LinearGame::Tabular(g) => linear_ac::train(g, cfg, seed)?,
    };
    Ok(out.records)
}

/// Runs every seed of `cfg` and writes into its output directory:
/// `config.toml` (resolved), `run.json`, `metrics.csv`, `summary.json` and
/// per-seed logs.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let cfg = cfg.resolved()?;
    let dir = cfg.out_dir.clone();
    fs::create_dir_all(&dir)?;
    cfg.save(&dir.join("config.toml"))?;
    write_json(
        &dir.join("run.json"),
        &RunInfo {
            name: &cfg.name,
            version: CODE_VERSION,
            algorithm: cfg.algorithm,
            seeds: &cfg.seeds,
        },
    )?;
    let log = match cfg.algorithm {
        Algorithm::LinearAc => {
            let game = cfg.linear_game()?;
            let runs = par_map(&cfg.seeds, |&s| linear_run(&game, &cfg.linear, s));
            let mut log = MetricsLog::new(0);
            for (seed, run) in cfg.seeds.iter().zip(runs) {
                let records = run.map_err(|e| seed_error(*seed, e))?;
                linear_ac::write_csv(create_file(&dir.join(format!("linear_seed{seed}.csv")))?, &records)?;
                log.extend(records.iter().map(MetricsRecord::from))?;
            }
            log
        }
        Algorithm::DeepAc => {
            let runs = par_map(&cfg.seeds, |&s| train_deep(&cfg.deep, s));
            let mut log = MetricsLog::new(cfg.deep.env.k);
            for (seed, run) in cfg.seeds.iter().zip(runs) {
                let out = run.map_err(|e| seed_error(*seed, e))?;
                write_episode_csv(create_file(&dir.join(format!("episodes_seed{seed}.csv")))?, &out.records, cfg.deep.env.k)?;
                write_bandit_csv(create_file(&dir.join(format!("bandit_seed{seed}.csv")))?, &out.bandit_log)?;
                save_team(&dir.join(format!("team_seed{seed}")), &out.team)?;
                log.extend(deep_metrics(&out.records))?;
            }
            log
        }
    };
    emit_csv(create_file(&dir.join("metrics.csv"))?, &log)?;
    let summary = summarize(&log);
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(ExperimentReport { dir, summary, log })
}

fn seed_error(seed: u64, e: Error) -> Error {
    Error::InvalidParam(format!("seed {seed} failed: {e}"))
}

/// What presets keep of a deep run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeepRun {
    pub config: DeepConfig,
    pub seed: u64,
    pub records: Vec<EpisodeRecord>,
    pub counters: MessageCounters,
    pub final_eval: EvalSummary,
}

/// Trains, or loads a finished run with the same config and seed from
/// `cache`. Runs are deterministic, so a hit is bit-identical to a rerun.
pub fn cached_deep_run(cache: &Path, label: &str, cfg: &DeepConfig, seed: u64) -> Result<DeepRun> {
    let path = cache.join(format!("{label}-seed{seed}.json"));
    if let Ok(f) = File::open(&path) {
        if let Ok(run) = serde_json::from_reader::<_, DeepRun>(std::io::BufReader::new(f)) {
            if run.config == *cfg && run.seed == seed {
                return Ok(run);
            }
        }
    }
    let out = train_deep(cfg, seed)?;
    let run = DeepRun {
        config: cfg.clone(),
        seed,
        records: out.records,
        counters: out.counters,
        final_eval: out.final_eval,
    };
    fs::create_dir_all(cache)?;
    write_json(&path, &run)?;
    Ok(run)
}
