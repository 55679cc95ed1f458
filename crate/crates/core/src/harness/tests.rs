use std::fs;

use proptest::prelude::*;

use super::*;
use crate::bandit::SchedulerKind;
use crate::deep_ac::CommMode;
use crate::envs::CosineMode;

fn tiny_deep(dir: &std::path::Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        algorithm: Algorithm::DeepAc,
        env: EnvSpec {
            name: "particle-nav".into(),
            n: Some(3),
            k: Some(2),
            mode: None,
        },
        seeds: vec![0, 1],
        out_dir: dir.to_path_buf(),
        ..ExperimentConfig::default()
    };
    cfg.deep.episodes = 4;
    cfg.deep.hidden = 8;
    cfg.deep.batch = 8;
    cfg.deep.updates_per_episode = 1;
    cfg.deep.eval_every = 2;
    cfg.deep.eval_episodes = 2;
    cfg
}

#[test]
fn config_round_trips_through_toml() {
    let mut cfg = tiny_deep(std::path::Path::new("out/x"));
    cfg.deep.gate.eta = 0.25;
    cfg.deep.comm = CommMode::Random;
    cfg.deep.scheduler.kind = SchedulerKind::Rule;
    cfg.env.mode = Some(CosineMode::Repeated);
    let text = cfg.to_toml().unwrap();
    assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
    let plain = ExperimentConfig::default();
    assert_eq!(ExperimentConfig::from_toml(&plain.to_toml().unwrap()).unwrap(), plain);
    // omitted fields take defaults
    let partial = ExperimentConfig::from_toml("name = \"p\"\nseeds = [3]\n").unwrap();
    assert_eq!(partial.seeds, vec![3]);
    assert_eq!(partial.deep, plain.deep);
}

#[test]
fn overrides_edit_nested_fields() {
    let mut cfg = ExperimentConfig::default();
    cfg.set("deep.gate.eta=0.3").unwrap();
    cfg.set("seeds=[4, 5]").unwrap();
    cfg.set("env.name=kuba").unwrap();
    cfg.set("linear.critic_schedule.p = 0.7").unwrap();
    assert_eq!(cfg.deep.gate.eta, 0.3);
    assert_eq!(cfg.seeds, vec![4, 5]);
    assert_eq!(cfg.env.name, "kuba");
    assert!(matches!(cfg.linear.critic_schedule, crate::consensus::StepSchedule::PowerDecay { p, .. } if p == 0.7));
    assert!(cfg.set("deep.gate.eta=oops").is_err());
    assert!(cfg.set("no-equals").is_err());
}

#[test]
fn empty_run_gives_header_only() {
    let mut buf = Vec::new();
    emit_csv(&mut buf, &MetricsLog::new(2)).unwrap();
    assert_eq!(
        String::from_utf8(buf).unwrap(),
        "seed,step,return,return_std,omega_disagreement,theta_disagreement,obs_msgs,param_msgs,\
         gate_open_r0,gate_open_r1,p_communicate\n"
    );
}

#[test]
fn medians() {
    assert_eq!(median(&[1.0, 2.0, 3.0]), Some(2.0));
    assert_eq!(median(&[3.0, 1.0, 2.0, 4.0]), Some(2.5));
    assert_eq!(median(&[]), None);
    let xs = [1.0, 5.0, 2.0, 8.0, 3.0];
    let (lo, hi) = bootstrap_ci(&xs, 0.95, 500, 1).unwrap();
    assert!(lo <= 3.0 && 3.0 <= hi && lo >= 1.0 && hi <= 8.0);
    assert_eq!(bootstrap_ci(&xs, 0.95, 500, 1), Some((lo, hi)));
    assert_eq!(Summary::of(&[]).median, None);
}

fn record(seed: u64, step: u64) -> MetricsRecord {
    MetricsRecord {
        seed,
        step,
        ret: -1.5,
        ret_std: Some(0.25),
        omega_disagreement: None,
        theta_disagreement: None,
        obs_msgs: 10 * step,
        param_msgs: step,
        open_by_rank: vec![0.5, 0.25],
        p_communicate: Some(0.125),
    }
}

#[test]
fn log_is_append_only() {
    let mut log = MetricsLog::new(2);
    log.push(record(0, 1)).unwrap();
    log.push(record(1, 1)).unwrap();
    log.push(record(0, 2)).unwrap();
    assert!(log.push(record(0, 2)).is_err());
    assert!(log.push(record(1, 0)).is_err());
    let mut bad = record(2, 1);
    bad.open_by_rank.push(1.0);
    assert!(log.push(bad).is_err());
    assert_eq!(log.finals()[&0].step, 2);
}

proptest! {
    #[test]
    fn csv_round_trips(rets in proptest::collection::vec(-1e3f64..1e3, 1..6), linear in any::<bool>()) {
        let ranks = if linear { 0 } else { 2 };
        let mut log = MetricsLog::new(ranks);
        for (k, r) in rets.iter().enumerate() {
            let mut rec = record(k as u64 % 2, k as u64 + 1);
            rec.ret = *r;
            if linear {
                rec.open_by_rank.clear();
                rec.omega_disagreement = Some(r.abs());
                rec.p_communicate = None;
            }
            log.push(rec).unwrap();
        }
        let mut buf = Vec::new();
        emit_csv(&mut buf, &log).unwrap();
        prop_assert_eq!(read_csv(buf.as_slice()).unwrap(), log);
    }
}

#[test]
fn par_map_keeps_order() {
    let xs: Vec<u64> = (0..17).collect();
    assert_eq!(par_map(&xs, |x| x * x), xs.iter().map(|x| x * x).collect::<Vec<_>>());
}

#[test]
fn identical_configs_give_identical_files() {
    let tmp = tempfile::tempdir().unwrap();
    let mut lin = ExperimentConfig {
        seeds: vec![0, 1],
        ..ExperimentConfig::default()
    };
    lin.linear.steps = 300;
    lin.linear.eval_every = 50;
    let deep = |d: &str| tiny_deep(&tmp.path().join(d));
    let mut files = Vec::new();
    for tag in ["a", "b"] {
        lin.out_dir = tmp.path().join(format!("lin-{tag}"));
        let l = run_experiment(&lin).unwrap();
        let d = run_experiment(&deep(&format!("deep-{tag}"))).unwrap();
        files.push([
            fs::read(l.dir.join("metrics.csv")).unwrap(),
            fs::read(d.dir.join("metrics.csv")).unwrap(),
            fs::read(d.dir.join("episodes_seed1.csv")).unwrap(),
        ]);
    }
    assert_eq!(files[0], files[1]);
    let saved = ExperimentConfig::load(&tmp.path().join("deep-a/config.toml")).unwrap();
    assert_eq!(saved.deep.env.n_agents, 3);
    assert!(tmp.path().join("lin-a/run.json").exists());
}

#[test]
fn cache_hits_match_fresh_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_deep(tmp.path()).resolved().unwrap().deep;
    let fresh = cached_deep_run(tmp.path(), "m", &cfg, 3).unwrap();
    let hit = cached_deep_run(tmp.path(), "m", &cfg, 3).unwrap();
    assert_eq!(fresh, hit);
    let mut other = cfg.clone();
    other.gamma = 0.9;
    assert_eq!(cached_deep_run(tmp.path(), "m", &other, 3).unwrap().config, other);
}

#[test]
fn deep_runs_need_the_navigation_world() {
    let mut cfg = tiny_deep(std::path::Path::new("unused"));
    cfg.env.name = "cosine".into();
    assert!(run_experiment(&cfg).is_err());
}

#[test]
fn unknown_preset_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(run_preset("nope", &PresetOptions::new(tmp.path())).is_err());
}

#[test]
fn bandit_checks_pass() {
    for c in bandit_behavior(0).unwrap() {
        assert!(c.passed, "{c:?}");
    }
}
