use proptest::prelude::*;
use rand::Rng;

use super::*;
use crate::error::Result;
use crate::rng::seeded;

/// `2·sigmoid(z) - 1` written as `tanh(z / 2)`.
fn squash(z: f64) -> f64 {
    (z / 2.0).tanh()
}

#[test]
fn window_mean_gives_zero() {
    let w = [1.0, 2.0, 3.0, 2.0];
    assert_eq!(shape_reward(&w, &[], 2.0, Level::Low), 0.0);
    assert_eq!(shape_reward(&w, &[0, 1, 0, 1], 2.0, Level::High), 0.0);
}

#[test]
fn worked_examples() {
    // population std of (1, 2, 3) is sqrt(2/3)
    let z = 1.0 / (2.0f64 / 3.0).sqrt();
    let low = shape_reward(&[1.0, 2.0, 3.0], &[], 3.0, Level::Low);
    assert!((low - squash(z)).abs() < 1e-12);
    assert!((low - 0.5459).abs() < 2e-4);
    let arms = [0, 1, 0, 1, 0, 1, 0, 1, 0, 1];
    let high = shape_reward(&[1.0, 2.0, 3.0], &arms, 3.0, Level::High);
    assert!((high - squash(z / 5.0)).abs() < 1e-12);
    assert!((high - 0.1217).abs() < 2e-4);
}

#[test]
fn degenerate_windows_are_neutral() {
    assert_eq!(shape_reward(&[5.0], &[0], 5.0, Level::Low), 0.0);
    assert_eq!(shape_reward(&[2.0, 2.0, 2.0], &[], 2.0, Level::Low), 0.0);
    // z < 0 with no skip selections in the window
    assert_eq!(shape_reward(&[1.0, 3.0], &[0, 0], 1.0, Level::High), 0.0);
}

proptest! {
    #[test]
    fn shaped_rewards_stay_open_interval(
        returns in proptest::collection::vec(-1e3f64..1e3, 1..12),
        arms in proptest::collection::vec(0usize..2, 12),
        high in any::<bool>(),
    ) {
        let g = *returns.last().unwrap();
        let level = if high { Level::High } else { Level::Low };
        let r = shape_reward(&returns, &arms[..returns.len()], g, level);
        prop_assert!(r > -1.0 && r < 1.0);
    }

    #[test]
    fn high_reward_shrinks_with_more_communication(
        returns in proptest::collection::vec(-10f64..10.0, 2..10),
    ) {
        let g = returns.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let n = returns.len();
        let mut prev = f64::INFINITY;
        for comm in 1..=n {
            let arms: Vec<usize> = (0..n).map(|k| usize::from(k >= comm)).collect();
            let r = shape_reward(&returns, &arms, g, Level::High);
            prop_assert!(r >= 0.0 && r <= prev + 1e-15);
            prev = r;
        }
    }

    #[test]
    fn exp3_weights_stay_finite(rewards in proptest::collection::vec((-1f64..=1.0, 0usize..4), 1..400)) {
        let mut b = Exp3::new(4, Exp3Config::default()).unwrap();
        for (r, arm) in rewards {
            b.update(arm, r).unwrap();
            let p = b.probabilities();
            prop_assert!(p.iter().all(|x| x.is_finite() && *x >= 0.1 / 4.0 - 1e-12));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn fresh_bandit_samples_uniformly() {
    let b = Exp3::new(5, Exp3Config::default()).unwrap();
    let mut rng = seeded(1);
    let n = 50_000;
    let mut counts = [0usize; 5];
    for _ in 0..n {
        counts[b.sample(&mut rng)] += 1;
    }
    let se = (0.2 * 0.8 / n as f64).sqrt();
    for c in counts {
        assert!((c as f64 / n as f64 - 0.2).abs() < 5.0 * se);
    }
}

#[test]
fn stationary_best_arm_wins() {
    let mut b = Exp3::new(5, Exp3Config::default()).unwrap();
    let mut rng = seeded(2);
    for _ in 0..2000 {
        let arm = b.sample(&mut rng);
        b.update(arm, if arm == 3 { 1.0 } else { -1.0 }).unwrap();
    }
    assert!(b.probabilities()[3] >= 0.5, "{:?}", b.probabilities());
}

#[test]
fn penalised_communication_dies_out() {
    let mut b = BiLevelBandit::new(0, 4, DEFAULT_WINDOW, Exp3Config::default()).unwrap();
    let mut rng = seeded(3);
    let mut window: Vec<f64> = Vec::new();
    for _ in 0..2000 {
        let d = b.decide(&mut rng);
        let base = if window.is_empty() {
            0.0
        } else {
            window.iter().sum::<f64>() / window.len() as f64
        };
        // communicating episodes land below the recent mean, skips above
        let g = if d.communicates() { base - 1.0 } else { base + 1.0 };
        window.push(g);
        if window.len() > DEFAULT_WINDOW {
            window.remove(0);
        }
        let fb = b.feedback(&d, g).unwrap();
        assert!(fb.r1 > -1.0 && fb.r1 < 1.0);
    }
    assert!(b.p_communicate() < 0.2, "{}", b.p_communicate());
}

#[test]
fn peers_skip_self() {
    let b = BiLevelBandit::new(2, 4, 10, Exp3Config::default()).unwrap();
    assert_eq!((0..3).map(|a| b.peer(a)).collect::<Vec<_>>(), vec![0, 1, 3]);
    let mut rng = seeded(0);
    for _ in 0..100 {
        let d = b.decide(&mut rng);
        assert_ne!(d.x2, Some(2));
        assert_eq!(d.communicates(), d.x2.is_some());
    }
}

/// Agents holding one critic and one actor vector each.
struct VecPool {
    critics: Vec<Vec<f64>>,
    actors: Vec<Vec<f64>>,
}

impl VecPool {
    fn random(n: usize, seed: u64) -> Self {
        let mut rng = seeded(seed);
        let mut v = || (0..4).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
        Self {
            critics: (0..n).map(|_| v()).collect(),
            actors: (0..n).map(|_| v()).collect(),
        }
    }
}

fn avg(a: &mut [Vec<f64>], i: usize, j: usize) {
    for k in 0..a[i].len() {
        let m = 0.5 * (a[i][k] + a[j][k]);
        a[i][k] = m;
        a[j][k] = m;
    }
}

impl ParamPool for VecPool {
    fn n_agents(&self) -> usize {
        self.critics.len()
    }

    fn critic_params(&self, i: usize) -> Vec<f64> {
        self.critics[i].clone()
    }

    fn average_pair(&mut self, i: usize, j: usize) -> Result<()> {
        avg(&mut self.critics, i, j);
        avg(&mut self.actors, i, j);
        Ok(())
    }

    fn average_all(&mut self) -> Result<()> {
        for v in [&mut self.critics, &mut self.actors] {
            let n = v.len() as f64;
            let mean: Vec<f64> = (0..v[0].len()).map(|k| v.iter().map(|x| x[k]).sum::<f64>() / n).collect();
            v.iter_mut().for_each(|x| x.clone_from(&mean));
        }
        Ok(())
    }
}

#[test]
fn never_communicating_schedules_nothing() {
    let cfg = SchedulerConfig {
        frequency: 0.0,
        ..SchedulerConfig::of_kind(SchedulerKind::Random)
    };
    let mut s = Scheduler::new(&cfg, 5).unwrap();
    let mut pool = VecPool::random(5, 0);
    let before = pool.critics.clone();
    let e = s.schedule_episode(&mut pool, &mut seeded(0)).unwrap();
    assert!(e.exchanges.is_empty());
    assert_eq!(e.param_msgs, 0);
    assert_eq!(pool.critics, before);
    let mut none = Scheduler::new(&SchedulerConfig::of_kind(SchedulerKind::None), 5).unwrap();
    assert_eq!(none.schedule_episode(&mut pool, &mut seeded(0)).unwrap().param_msgs, 0);
}

#[test]
fn full_consensus_counts_every_directed_pair() {
    let mut s = Scheduler::new(&SchedulerConfig::of_kind(SchedulerKind::Full), 6).unwrap();
    let mut pool = VecPool::random(6, 1);
    let e = s.schedule_episode(&mut pool, &mut seeded(0)).unwrap();
    assert_eq!(e.param_msgs, 30);
    assert!(pool.critics.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn random_scheduler_rate() {
    let (n, f, episodes) = (6, 0.3, 4000);
    let cfg = SchedulerConfig {
        frequency: f,
        ..SchedulerConfig::of_kind(SchedulerKind::Random)
    };
    let mut s = Scheduler::new(&cfg, n).unwrap();
    let mut pool = VecPool::random(n, 2);
    let mut rng = seeded(4);
    let total: usize = (0..episodes)
        .map(|_| s.schedule_episode(&mut pool, &mut rng).unwrap().param_msgs)
        .sum();
    let trials = (n * episodes) as f64;
    let se = (f * (1.0 - f) / trials).sqrt();
    assert!((total as f64 / trials - f).abs() < 4.0 * se);
}

#[test]
fn gossip_exchange_leaves_endpoints_equal() {
    let cfg = SchedulerConfig {
        frequency: 1.0,
        ..SchedulerConfig::of_kind(SchedulerKind::Random)
    };
    let mut s = Scheduler::new(&cfg, 2).unwrap();
    let mut pool = VecPool::random(2, 3);
    let e = s.schedule_episode(&mut pool, &mut seeded(1)).unwrap();
    // agent 1's exchange is the last applied, and both agents meet each other
    assert_eq!(e.exchanges, vec![(0, 1), (1, 0)]);
    assert_eq!(pool.critics[0], pool.critics[1]);
    assert_eq!(pool.actors[0], pool.actors[1]);
}

#[test]
fn rule_based_scores() {
    let own = vec![0.0; 3];
    let mut rng = seeded(0);
    let same = vec![Some(own.clone()); 4];
    assert_eq!(rule_based_select(0, &own, &same, &mut rng), 1);
    assert_eq!(rule_based_select(1, &own, &same, &mut rng), 0);
    let mut caches = same.clone();
    caches[2] = Some(vec![0.0, 1.0, 0.0]);
    assert_eq!(rule_based_select(0, &own, &caches, &mut rng), 2);
}

#[test]
fn rule_based_score_drops_after_exchange() {
    let cfg = SchedulerConfig {
        frequency: 1.0,
        ..SchedulerConfig::of_kind(SchedulerKind::Rule)
    };
    let mut s = Scheduler::new(&cfg, 4).unwrap();
    let mut pool = VecPool::random(4, 5);
    let mut rng = seeded(6);
    let l1 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>();
    for _ in 0..5 {
        let before = pool.critics.clone();
        let e = s.schedule_episode(&mut pool, &mut rng).unwrap();
        let (i, j) = e.exchanges[0];
        let Scheduler::Rule { caches, .. } = &s else { unreachable!() };
        let cache = caches[i][j].as_ref().unwrap();
        // the cache is j's critic right after the exchange
        let averaged: Vec<f64> = before[i].iter().zip(&before[j]).map(|(a, b)| 0.5 * (a + b)).collect();
        assert_eq!(l1(&averaged, cache), 0.0);
        assert!(l1(&before[i], &before[j]) > 0.0);
        // perturb so later rounds have something to reconcile
        for c in &mut pool.critics {
            c[0] += rng.random_range(-0.1..0.1);
        }
    }
}
