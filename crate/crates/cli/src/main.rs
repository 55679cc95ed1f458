use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use homac_core::bandit::SchedulerKind;
use homac_core::consensus::{validate_assumptions, ConsensusSpec, StepSchedule};
use homac_core::envs::{self, CosineMode, Env};
use homac_core::exact_eval::sharing_report;
use homac_core::harness::{
    read_csv, run_experiment, run_preset, summarize, Algorithm, EnvSpec, ExperimentConfig, PresetOptions, PRESETS,
};
use homac_core::mg_core::{check_homogeneous, FiniteMG, GameFile, HomogeneityOptions, ObservationMap, PermutationSet};
use homac_core::rng::seeded;

#[derive(Parser)]
#[command(name = "homac", version, about = "Consensus actor-critic experiments for homogeneous Markov games")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check the homogeneity conditions of a finite game.
    Verify {
        #[command(flatten)]
        game: GameArgs,
        /// Enumerate all N! permutations instead of transpositions.
        #[arg(long)]
        all_permutations: bool,
    },
    /// Compare the best state-based, observation-based and shared policies.
    VerifyTheorem1 {
        #[command(flatten)]
        game: GameArgs,
    },
    /// Check consensus weights, step sizes and (optionally) critic features.
    ValidateAssumptions {
        #[arg(long, value_enum, default_value = "uniform")]
        consensus: ConsensusArg,
        #[arg(long, default_value_t = 3)]
        n: usize,
        #[arg(long, default_value_t = 0.65)]
        critic_power: f64,
        #[arg(long, default_value_t = 0.85)]
        actor_power: f64,
        /// Check the rank of the cosine game's critic features too.
        #[arg(long)]
        features: bool,
        #[arg(long, default_value_t = 2000)]
        samples: usize,
    },
    /// Train the linear consensus actor-critic on a finite game.
    TrainLinear {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Average actor parameters after every step (uniform weights).
        #[arg(long, value_enum)]
        actor_consensus: Option<Toggle>,
        /// Adaptive-moment steps for actor and critic instead of decaying ones.
        #[arg(long)]
        adaptive: bool,
    },
    /// Train the gated deep actor-critic on the navigation world.
    TrainDeep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        eta: Option<f64>,
        /// bandit, random, rule, full or none.
        #[arg(long)]
        scheduler: Option<SchedulerKind>,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Run a named multi-seed experiment; exits nonzero if any check fails.
    RunPreset {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(PRESETS))]
        name: String,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
        /// Use seeds 0..N instead of the preset's default.
        #[arg(long)]
        seeds: Option<u64>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        steps: Option<u64>,
    },
    /// Median and bootstrap interval of the final rows of metrics files.
    Summarize {
        /// `metrics*.csv` files or run directories.
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
}

#[derive(Args)]
struct GameArgs {
    /// triangle, kuba or cosine.
    #[arg(long, default_value = "cosine")]
    env: String,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Read the game from a TOML game file instead.
    #[arg(long, conflicts_with = "env")]
    game_file: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment config; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `dotted.key=value` overrides, applied after the flags.
    #[arg(long = "set")]
    sets: Vec<String>,
    #[arg(long)]
    env: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    /// Use seeds 0..N.
    #[arg(long)]
    seeds: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    OneStep,
    Repeated,
}

impl From<ModeArg> for CosineMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::OneStep => CosineMode::OneStep,
            ModeArg::Repeated => CosineMode::Repeated,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Toggle {
    On,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum ConsensusArg {
    Uniform,
    Identity,
    Gossip,
}

impl From<ConsensusArg> for ConsensusSpec {
    fn from(c: ConsensusArg) -> Self {
        match c {
            ConsensusArg::Uniform => ConsensusSpec::Uniform,
            ConsensusArg::Identity => ConsensusSpec::Identity,
            ConsensusArg::Gossip => ConsensusSpec::Gossip,
        }
    }
}

fn load_game(g: &GameArgs) -> Result<(FiniteMG, ObservationMap)> {
    if let Some(path) = &g.game_file {
        let (mg, obs) = GameFile::load(path)?.build()?;
        let obs = obs.with_context(|| format!("{} has no observation section", path.display()))?;
        return Ok((mg, obs));
    }
    let spec = EnvSpec {
        name: g.env.clone(),
        n: g.n,
        k: None,
        mode: g.mode.map(Into::into),
    };
    match spec.build()? {
        Env::Finite { mg, obs } => Ok((mg, obs)),
        Env::Continuous(_) => bail!("{} is not a finite game", g.env),
    }
}

fn print_json<T: serde::Serialize>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn base_config(run: &RunArgs, algorithm: Algorithm, default_env: &str) -> Result<ExperimentConfig> {
    let mut cfg = match &run.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig {
            algorithm,
            env: EnvSpec {
                name: default_env.into(),
                ..EnvSpec::default()
            },
            ..ExperimentConfig::default()
        },
    };
    cfg.algorithm = algorithm;
    if let Some(e) = &run.env {
        cfg.env.name = e.clone();
    }
    if run.n.is_some() {
        cfg.env.n = run.n;
    }
    if let Some(s) = run.seeds {
        cfg.seeds = (0..s).collect();
    }
    if let Some(o) = &run.out {
        cfg.out_dir = o.clone();
    }
    Ok(cfg)
}

fn finish(mut cfg: ExperimentConfig, sets: &[String]) -> Result<ExitCode> {
    for s in sets {
        cfg.set(s)?;
    }
    let report = run_experiment(&cfg)?;
    log::info!("wrote {}", report.dir.display());
    print_json(&report.summary)?;
    Ok(ExitCode::SUCCESS)
}

fn summarize_path(p: &Path) -> Result<()> {
    let file = if p.is_dir() { p.join("metrics.csv") } else { p.to_path_buf() };
    let log = read_csv(std::fs::File::open(&file).with_context(|| format!("opening {}", file.display()))?)?;
    println!("{}", file.display());
    print_json(&summarize(&log))
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.cmd {
        Cmd::Verify { game, all_permutations } => {
            let (mg, obs) = load_game(&game)?;
            let opts = HomogeneityOptions {
                permutations: if all_permutations { PermutationSet::All } else { PermutationSet::Transpositions },
                ..HomogeneityOptions::default()
            };
            let report = check_homogeneous(&mg, &obs, opts)?;
            print_json(&report)?;
            println!("homogeneous: {}", report.is_homogeneous());
        }
        Cmd::VerifyTheorem1 { game } => {
            let (mg, obs) = load_game(&game)?;
            let report = sharing_report(&mg, &obs)?;
            print_json(&report)?;
            println!("lossless sharing: {}", report.lossless);
        }
        Cmd::ValidateAssumptions {
            consensus,
            n,
            critic_power,
            actor_power,
            features,
            samples,
        } => {
            let spec: ConsensusSpec = consensus.into();
            let mut rng = seeded(0);
            let phi = if features {
                let game = envs::CosineToyMG::new(n, CosineMode::OneStep)?;
                Some(game.critic_features().matrix(&game.support_rows())?)
            } else {
                None
            };
            let report = validate_assumptions(
                || spec.sample(n, &mut rng),
                n,
                samples,
                &StepSchedule::PowerDecay { p: critic_power, scale: 1.0 },
                &StepSchedule::PowerDecay { p: actor_power, scale: 1.0 },
                phi.as_ref(),
            )?;
            print_json(&report)?;
            if !report.passed() {
                return Ok(ExitCode::FAILURE);
            }
        }
        Cmd::TrainLinear {
            run,
            steps,
            mode,
            actor_consensus,
            adaptive,
        } => {
            let mut cfg = base_config(&run, Algorithm::LinearAc, "cosine")?;
            if let Some(t) = actor_consensus {
                cfg.linear.actor_consensus = if t == Toggle::On { ConsensusSpec::Uniform } else { ConsensusSpec::Identity };
            }
            if adaptive {
                cfg.linear.critic_schedule = StepSchedule::adaptive();
                cfg.linear.actor_schedule = StepSchedule::adaptive();
            }
            if let Some(s) = steps {
                cfg.linear.steps = s;
            }
            if let Some(m) = mode {
                cfg.env.mode = Some(m.into());
            }
            return finish(cfg, &run.sets);
        }
        Cmd::TrainDeep {
            run,
            k,
            eta,
            scheduler,
            episodes,
        } => {
            let mut cfg = base_config(&run, Algorithm::DeepAc, "particle-nav")?;
            if let Some(kind) = scheduler {
                let base = homac_core::deep_ac::DeepConfig::method(kind, eta.unwrap_or(cfg.deep.gate.eta));
                cfg.deep.scheduler = base.scheduler;
                cfg.deep.comm = base.comm;
            }
            if let Some(e) = eta {
                cfg.deep.gate.eta = e;
            }
            if k.is_some() {
                cfg.env.k = k;
            }
            if let Some(e) = episodes {
                cfg.deep.episodes = e;
            }
            return finish(cfg, &run.sets);
        }
        Cmd::RunPreset {
            name,
            out,
            seeds,
            episodes,
            steps,
        } => {
            let opts = PresetOptions {
                out_dir: out,
                seeds: seeds.map(|s| (0..s).collect()),
                episodes,
                steps,
            };
            let report = run_preset(&name, &opts)?;
            for c in &report.checks {
                println!("[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            for n in &report.notes {
                println!("note: {n}");
            }
            println!(
                "{} {} in {:.1}s, summary at {}",
                report.preset,
                if report.passed { "passed" } else { "FAILED" },
                report.seconds,
                report.dir.join("summary.json").display()
            );
            if !report.passed {
                return Ok(ExitCode::FAILURE);
            }
        }
        Cmd::Summarize { paths } => {
            for p in &paths {
                summarize_path(p)?;
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
