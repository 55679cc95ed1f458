use rand::Rng;

use super::*;
use crate::bandit::{Scheduler, SchedulerConfig, SchedulerKind};
use crate::envs::{ParticleNav, ParticleNavConfig};
use crate::nets::relative_error;
use crate::rng::{seeded, SimRng};

const H: f64 = 1e-5;

fn numeric_grad(x: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|k| {
            probe[k] = x[k] + H;
            let up = f(&probe);
            probe[k] = x[k] - H;
            let down = f(&probe);
            probe[k] = x[k];
            (up - down) / (2.0 * H)
        })
        .collect()
}

/// Transitions from a world driven by random accelerations.
fn transitions(cfg: &ParticleNavConfig, count: usize, rng: &mut SimRng) -> Vec<Transition> {
    let mut world = ParticleNav::new(cfg.clone()).unwrap();
    let topo = Topology { k: cfg.k };
    let mut obs = world.reset_with(rng);
    let mut out = Vec::new();
    while out.len() < count {
        let nbrs = topo.neighbors(&world);
        let actions: Vec<[f64; 2]> = (0..cfg.n_agents)
            .map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect();
        let step = world.step(&actions).unwrap();
        out.push(Transition {
            obs: obs.clone(),
            actions,
            rewards: step.rewards.clone(),
            next_obs: step.observations.clone(),
            neighbors: nbrs,
            next_neighbors: topo.neighbors(&world),
        });
        obs = if step.done { world.reset_with(rng) } else { step.observations };
    }
    out
}

fn small_cfg() -> ParticleNavConfig {
    ParticleNavConfig::with_agents(4, 2)
}

fn randomize(p: &mut [f64], rng: &mut SimRng) {
    p.iter_mut().for_each(|x| *x = rng.random_range(-0.5..0.5));
}

/// Agent nets with every parameter (gate output layer included) random.
fn random_agent(cfg: &ParticleNavConfig, hidden: usize, rng: &mut SimRng) -> AgentNets {
    let mut a = AgentNets::new(cfg.obs_dim(), hidden, rng).unwrap();
    let mut p = a.gate.params();
    randomize(&mut p, rng);
    a.gate.set_params(&p).unwrap();
    a
}

fn force_gate(a: &mut AgentNets, open_logit: f64, closed_logit: f64) {
    let mut p = a.gate.params();
    p.iter_mut().for_each(|x| *x = 0.0);
    let n = p.len();
    p[n - 2 + OPEN] = open_logit;
    p[n - 1 - OPEN] = closed_logit;
    a.gate.set_params(&p).unwrap();
}

/// Fraction of open gates, and the fraction of draws opening every gate
/// minus the fraction opening none.
fn open_fraction(a: &AgentNets, cfg: &ParticleNavConfig, trs: &[Transition], draws: usize) -> (f64, f64) {
    let mut rng = seeded(99);
    let gate = GateConfig::default();
    let (mut open, mut total, mut all, mut none) = (0usize, 0usize, 0usize, 0usize);
    for d in 0..draws {
        let tr = &trs[d % trs.len()];
        let sel = a
            .select(cfg, &tr.obs[0], tr.neighbors[0].len(), CommMode::Learned, &gate, &mut rng)
            .unwrap();
        open += sel.iter().filter(|x| **x).count();
        total += sel.len();
        all += usize::from(sel.iter().all(|x| *x));
        none += usize::from(sel.iter().all(|x| !*x));
    }
    (open as f64 / total as f64, all as f64 / draws as f64 - none as f64 / draws as f64)
}

#[test]
fn forced_and_untrained_gates() {
    let cfg = small_cfg();
    let mut rng = seeded(1);
    let trs = transitions(&cfg, 50, &mut rng);
    let mut a = AgentNets::new(cfg.obs_dim(), 16, &mut rng).unwrap();
    let (freq, _) = open_fraction(&a, &cfg, &trs, 20_000);
    assert!((freq - 0.5).abs() < 0.02, "{freq}");
    force_gate(&mut a, 10.0, -10.0);
    let (_, all_minus_none) = open_fraction(&a, &cfg, &trs, 20_000);
    assert!(all_minus_none >= 0.999);
    force_gate(&mut a, -10.0, 10.0);
    let (_, all_minus_none) = open_fraction(&a, &cfg, &trs, 20_000);
    assert!(all_minus_none <= -0.999);
}

#[test]
fn critic_is_permutation_invariant_and_pools_means() {
    let cfg = small_cfg();
    let mut rng = seeded(2);
    let a = AgentNets::new(cfg.obs_dim(), 16, &mut rng).unwrap();
    let tr = &transitions(&cfg, 1, &mut rng)[0];
    let elems: Vec<Vec<f64>> = (0..4)
        .map(|k| critic_element(&tr.obs[k], tr.actions[k], k == 0))
        .collect();
    let q = a.critic.forward(&elems).unwrap();
    let mut rev = elems.clone();
    rev.reverse();
    assert_eq!(q, a.critic.forward(&rev).unwrap());
    // two-element mean pool through the head
    let pair = &elems[..2];
    let e0 = a.critic.encoder.forward(&pair[0]).unwrap();
    let e1 = a.critic.encoder.forward(&pair[1]).unwrap();
    let mean: Vec<f64> = e0.iter().zip(&e1).map(|(x, y)| 0.5 * (x + y)).collect();
    let expect = a.critic.head.forward(&mean).unwrap()[0];
    assert!((a.critic.forward(pair).unwrap()[0] - expect).abs() < 1e-12);
}

#[test]
fn zero_critic_returns_head_bias() {
    let cfg = small_cfg();
    let mut rng = seeded(3);
    let mut a = AgentNets::new(cfg.obs_dim(), 8, &mut rng).unwrap();
    let mut p = vec![0.0; a.critic.n_params()];
    *p.last_mut().unwrap() = 0.7;
    a.critic.set_params(&p).unwrap();
    for tr in transitions(&cfg, 5, &mut rng) {
        let e = vec![critic_element(&tr.obs[1], tr.actions[1], true)];
        assert_eq!(a.critic.forward(&e).unwrap()[0], 0.7);
    }
}

#[test]
fn td_loss_special_cases() {
    let cfg = small_cfg();
    let mut rng = seeded(4);
    let mut a = AgentNets::new(cfg.obs_dim(), 8, &mut rng).unwrap();
    let trs = transitions(&cfg, 6, &mut rng);
    let gate = GateConfig::default();
    // critic value equal to the target and open probability 1/2 = η
    let samples: Vec<TdSample> = trs
        .iter()
        .map(|tr| {
            let noise = gate_noise(tr.neighbors[0].len(), &mut rng);
            let mut probe = TdSample {
                tr,
                target: 0.0,
                selection: Selection::Gate(noise),
            };
            let out = td_loss_and_grads(0, &a, &cfg, std::slice::from_ref(&probe), &gate, GateMode::StraightThrough)
                .unwrap();
            probe.target = out.td.sqrt() * probe_sign(&a, &cfg, &probe, &gate);
            probe
        })
        .collect();
    let out = td_loss_and_grads(0, &a, &cfg, &samples, &gate, GateMode::StraightThrough).unwrap();
    assert!(out.loss.abs() < 1e-20, "{}", out.loss);
    // a fully open gate costs α·(1 - η) per sample
    force_gate(&mut a, 50.0, -50.0);
    let out = td_loss_and_grads(0, &a, &cfg, &samples, &gate, GateMode::StraightThrough).unwrap();
    assert!((out.regularizer - 0.5 * gate.alpha).abs() < 1e-9);
}

/// Sign of the critic value a sample sees, so `target = Q` exactly.
fn probe_sign(a: &AgentNets, cfg: &ParticleNavConfig, s: &TdSample, gate: &GateConfig) -> f64 {
    let up = TdSample {
        target: 1e-3,
        ..s.clone()
    };
    let base = td_loss_and_grads(0, a, cfg, std::slice::from_ref(s), gate, GateMode::StraightThrough).unwrap();
    let moved = td_loss_and_grads(0, a, cfg, std::slice::from_ref(&up), gate, GateMode::StraightThrough).unwrap();
    if moved.td < base.td {
        1.0
    } else {
        -1.0
    }
}

/// The smallest relu margin the TD loss touches on `samples`.
fn td_margin(a: &AgentNets, cfg: &ParticleNavConfig, samples: &[TdSample], gate: &GateConfig) -> f64 {
    let mut m = f64::INFINITY;
    for s in samples {
        let tr = s.tr;
        let obs = &tr.obs[0];
        let k = tr.neighbors[0].len();
        let g = a.gate.forward(obs, &embeddings(cfg, obs, k)).unwrap();
        m = m.min(g.relu_margin());
        let Selection::Gate(noise) = &s.selection else { unreachable!() };
        let gs = sample_gates(&g.logits, noise, gate.tau).unwrap();
        let mut elems = vec![critic_element(obs, tr.actions[0], true)];
        let mut w = vec![1.0];
        for (&j, g) in tr.neighbors[0].iter().zip(&gs) {
            elems.push(critic_element(&tr.obs[j], tr.actions[j], false));
            w.push(gate_value(g, GateMode::Relaxed));
        }
        m = m.min(a.critic.forward_cached(&elems, Some(&w)).unwrap().relu_margin());
    }
    m
}

#[test]
fn td_gradients_match_finite_differences() {
    let cfg = small_cfg();
    let mut rng = seeded(5);
    let gate = GateConfig {
        eta: 0.3,
        ..GateConfig::default()
    };
    let mut checked = 0;
    while checked < 10 {
        let a = random_agent(&cfg, 6, &mut rng);
        let trs = transitions(&cfg, 3, &mut rng);
        let samples: Vec<TdSample> = trs
            .iter()
            .map(|tr| TdSample {
                tr,
                target: rng.random_range(-1.0..1.0),
                selection: Selection::Gate(gate_noise(tr.neighbors[0].len(), &mut rng)),
            })
            .collect();
        if td_margin(&a, &cfg, &samples, &gate) < 1e-3 {
            continue;
        }
        let out = td_loss_and_grads(0, &a, &cfg, &samples, &gate, GateMode::Relaxed).unwrap();
        if (out.mean_open_prob - gate.eta).abs() < 1e-3 {
            continue;
        }
        let num_c = numeric_grad(&a.critic.params(), |p| {
            let mut b = a.clone();
            b.critic.set_params(p).unwrap();
            td_loss_and_grads(0, &b, &cfg, &samples, &gate, GateMode::Relaxed).unwrap().loss
        });
        let num_g = numeric_grad(&a.gate.params(), |p| {
            let mut b = a.clone();
            b.gate.set_params(p).unwrap();
            td_loss_and_grads(0, &b, &cfg, &samples, &gate, GateMode::Relaxed).unwrap().loss
        });
        assert!(relative_error(&out.critic_grads, &num_c) <= 1e-4);
        assert!(relative_error(&out.gate_grads, &num_g) <= 1e-4);
        checked += 1;
    }
}

#[test]
fn actor_gradients() {
    let cfg = small_cfg();
    let mut rng = seeded(6);
    let (mut checked, mut crossed) = (0, 0);
    while checked < 10 {
        let a = random_agent(&cfg, 6, &mut rng);
        let trs = transitions(&cfg, 3, &mut rng);
        let samples: Vec<ActorSample> = trs
            .iter()
            .map(|tr| ActorSample {
                tr,
                open: (0..tr.neighbors[0].len()).map(|_| rng.random::<bool>()).collect(),
            })
            .collect();
        let margin = trs
            .iter()
            .map(|tr| a.actor.forward_cached(&tr.obs[0]).unwrap().relu_margin())
            .fold(f64::INFINITY, f64::min);
        if margin < 1e-3 {
            continue;
        }
        let (_, grads) = actor_loss_and_grads(0, &a, &samples).unwrap();
        let num = numeric_grad(&a.actor.params(), |p| {
            let mut b = a.clone();
            b.actor.set_params(p).unwrap();
            actor_loss_and_grads(0, &b, &samples).unwrap().0
        });
        // critic kinks move with the action; tolerate a few instances crossing one
        if relative_error(&grads, &num) > 1e-4 {
            crossed += 1;
            assert!(crossed <= 3);
            continue;
        }
        checked += 1;
    }
}

#[test]
fn actor_ignores_a_critic_blind_to_actions() {
    let cfg = small_cfg();
    let mut rng = seeded(7);
    let mut a = AgentNets::new(cfg.obs_dim(), 8, &mut rng).unwrap();
    // zero the first-layer weights reading the action block
    let mut p = a.critic.params();
    let n_in = cfg.obs_dim() + 3;
    for row in 0..8 {
        for c in [cfg.obs_dim(), cfg.obs_dim() + 1] {
            p[row * n_in + c] = 0.0;
        }
    }
    a.critic.set_params(&p).unwrap();
    let trs = transitions(&cfg, 4, &mut rng);
    let samples: Vec<ActorSample> = trs
        .iter()
        .map(|tr| ActorSample {
            tr,
            open: vec![true; tr.neighbors[0].len()],
        })
        .collect();
    let (_, g) = actor_loss_and_grads(0, &a, &samples).unwrap();
    assert!(g.iter().all(|x| *x == 0.0));
}

#[test]
fn actor_step_raises_the_critic_value() {
    let cfg = small_cfg();
    let mut rng = seeded(8);
    let a = AgentNets::new(cfg.obs_dim(), 8, &mut rng).unwrap();
    let trs = transitions(&cfg, 8, &mut rng);
    let samples: Vec<ActorSample> = trs
        .iter()
        .map(|tr| ActorSample {
            tr,
            open: vec![true; tr.neighbors[0].len()],
        })
        .collect();
    let (loss, g) = actor_loss_and_grads(0, &a, &samples).unwrap();
    let mut b = a.clone();
    let p: Vec<f64> = a.actor.params().iter().zip(&g).map(|(p, g)| p - 1e-4 * g).collect();
    b.actor.set_params(&p).unwrap();
    let (after, _) = actor_loss_and_grads(0, &b, &samples).unwrap();
    assert!(after < loss);
}

fn tiny_config(kind: SchedulerKind) -> DeepConfig {
    let mut cfg = DeepConfig::method(kind, 0.5);
    cfg.env = ParticleNavConfig::with_agents(4, 2);
    cfg.episodes = 6;
    cfg.hidden = 8;
    cfg.batch = 16;
    cfg.updates_per_episode = 1;
    cfg.eval_every = 3;
    cfg.eval_episodes = 2;
    cfg
}

#[test]
fn message_counts_of_baselines() {
    let mut cfg = DeepConfig::method(SchedulerKind::Full, 0.5);
    cfg.env = ParticleNavConfig::with_agents(6, 5);
    cfg.hidden = 4;
    let mut rng = seeded(0);
    let mut team = Team {
        agents: (0..6)
            .map(|_| AgentNets::new(cfg.env.obs_dim(), 4, &mut rng).unwrap())
            .collect(),
    };
    let mut world = ParticleNav::new(cfg.env.clone()).unwrap();
    let mut sched = Scheduler::new(&cfg.scheduler, 6).unwrap();
    let mut rngs = RunRngs::new(0);
    let s = run_episode(&cfg, &mut world, &mut team, Some(&mut sched), None, 0.1, &mut rngs).unwrap();
    assert_eq!(s.obs_msgs, 6 * 5 * 25);
    assert_eq!(s.param_msgs, 30);
    let il = DeepConfig {
        comm: CommMode::None,
        scheduler: SchedulerConfig::of_kind(SchedulerKind::None),
        ..cfg.clone()
    };
    let mut none = Scheduler::new(&il.scheduler, 6).unwrap();
    let s = run_episode(&il, &mut world, &mut team, Some(&mut none), None, 0.1, &mut rngs).unwrap();
    assert_eq!((s.obs_msgs, s.param_msgs), (0, 0));
}

#[test]
fn training_is_deterministic() {
    let cfg = tiny_config(SchedulerKind::Bandit);
    let a = train_deep(&cfg, 3).unwrap();
    let b = train_deep(&cfg, 3).unwrap();
    assert_eq!(a.records, b.records);
    assert_eq!(a.bandit_log, b.bandit_log);
    assert_eq!(a.team, b.team);
    let c = train_deep(&cfg, 4).unwrap();
    assert_ne!(a.team, c.team);
    assert_eq!(a.records.len(), 6);
    assert_eq!(a.records.iter().filter(|r| r.eval.is_some()).count(), 2);
}

#[test]
fn counters_are_monotone() {
    let cfg = tiny_config(SchedulerKind::Full);
    let out = train_deep(&cfg, 1).unwrap();
    let obs: u64 = out.records.iter().map(|r| r.obs_msgs).sum();
    assert_eq!(out.counters.obs_msgs, obs);
    assert_eq!(out.counters.param_msgs, 6 * 12);
}

#[test]
fn memory_is_a_ring() {
    let cfg = small_cfg();
    let mut rng = seeded(9);
    let trs = transitions(&cfg, 5, &mut rng);
    let mut m = ReplayMemory::new(3).unwrap();
    assert!(m.sample(1, &mut rng).is_err());
    for t in &trs {
        m.push(t.clone()).unwrap();
    }
    assert_eq!(m.len(), 3);
    for s in m.sample(200, &mut rng).unwrap() {
        assert!(trs[2..].contains(s));
    }
    let mut bad = trs[0].clone();
    bad.rewards.pop();
    assert!(m.push(bad).is_err());
}

#[test]
fn neighbors_exclude_self() {
    let cfg = ParticleNavConfig::with_agents(5, 3);
    let mut world = ParticleNav::new(cfg.clone()).unwrap();
    world.reset(4);
    let topo = Topology { k: 3 };
    for (i, n) in topo.neighbors(&world).iter().enumerate() {
        assert_eq!(n.len(), 3);
        assert!(!n.contains(&i));
    }
}

#[test]
fn episode_csv_schema() {
    let mut buf = Vec::new();
    write_episode_csv(&mut buf, &[], 2).unwrap();
    assert_eq!(
        String::from_utf8(buf).unwrap(),
        "seed,episode,return,obs_msgs,param_msgs,gate_open_r0,gate_open_r1,p_communicate,critic_loss,eval_return,eval_std,eval_open_rate\n"
    );
    let mut buf = Vec::new();
    write_bandit_csv(&mut buf, &[]).unwrap();
    assert_eq!(
        String::from_utf8(buf).unwrap(),
        "seed,episode,agent,x1,x2,r1,r2,p_communicate\n"
    );
}
