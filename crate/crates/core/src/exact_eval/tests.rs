use rand::Rng;

use super::*;
use crate::envs::{
    kuba_game, kuba_observations, triangle_game, triangle_observations, CosineMode, CosineToyMG,
};
use crate::error::Error;
use crate::linear_ac::{FeatureMap, Row};
use crate::mg_core::{FiniteMG, Layout, ObservationMap, Outcome, DEFAULT_BUDGET};
use crate::rng::seeded;

fn single_state(gamma: f64) -> FiniteMG {
    FiniteMG::tabulate(
        Layout::homogeneous(1, &["x"], &["a"]),
        gamma,
        &[(vec![0], 1.0)],
        |_| false,
        |_, _| Outcome {
            next: vec![(vec![0], 1.0)],
            rewards: vec![1.0],
        },
    )
    .unwrap()
}

/// Two agents, two local states, two local actions, random dynamics.
fn random_game(seed: u64, gamma: f64) -> FiniteMG {
    let mut rng = seeded(seed);
    FiniteMG::tabulate(
        Layout::homogeneous(2, &["a", "b"], &["0", "1"]),
        gamma,
        &[(vec![0, 0], 0.5), (vec![1, 0], 0.5)],
        |_| false,
        |_, _| {
            let w: Vec<f64> = (0..4).map(|_| rng.random_range(0.1..1.0)).collect();
            let total: f64 = w.iter().sum();
            let next = (0..4)
                .map(|k| (vec![k / 2, k % 2], w[k] / total))
                .collect();
            Outcome {
                next,
                rewards: vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
            }
        },
    )
    .unwrap()
}

fn random_policy(mg: &FiniteMG, seed: u64) -> FactoredPolicy {
    let mut rng = seeded(seed);
    let tables = (0..mg.n_agents())
        .map(|_| {
            (0..mg.n_states())
                .map(|_| {
                    let p: f64 = rng.random_range(0.05..0.95);
                    vec![p, 1.0 - p]
                })
                .collect()
        })
        .collect();
    FactoredPolicy::state_based(tables).unwrap()
}

#[test]
fn geometric_series() {
    let mg = single_state(0.5);
    let e = evaluate(&mg, None, &FactoredPolicy::uniform(&mg)).unwrap();
    assert!((e.v[0] - 2.0).abs() < 1e-12);
    assert!((e.j - 2.0).abs() < 1e-12);
    assert_eq!(e.d, vec![1.0]);
    assert!(!e.episodic);
}

#[test]
fn undiscounted_recurrent_chain_is_singular() {
    let mg = single_state(1.0);
    assert!(matches!(
        evaluate(&mg, None, &FactoredPolicy::uniform(&mg)),
        Err(Error::Singular(_))
    ));
}

#[test]
fn kuba_rewarding_action_scores_one() {
    let mg = kuba_game(2).unwrap();
    let good = mg.encode_action(&[0, 1]).unwrap();
    let policy = FactoredPolicy::deterministic(&mg, |_| good);
    let e = evaluate(&mg, None, &policy).unwrap();
    assert!((e.j - 1.0).abs() < 1e-12);
    assert!(e.episodic);
}

#[test]
fn cosine_uniform_policy_scores_zero() {
    let g = CosineToyMG::new(4, CosineMode::OneStep).unwrap();
    let mg = g.to_finite_mg().unwrap();
    // independent oracle: mean reward over all 16 joint actions
    let mut mean = 0.0;
    for code in 0..16usize {
        let a: Vec<usize> = (0..4).map(|i| (code >> i) & 1).collect();
        mean += g.reward(&a) / 16.0;
    }
    let e = evaluate(&mg, None, &FactoredPolicy::uniform(&mg)).unwrap();
    assert!(mean.abs() < 1e-12);
    assert!((e.j - mean).abs() < 1e-12);
}

#[test]
fn bellman_consistency_on_random_games() {
    for seed in 0..20 {
        let mg = random_game(seed, 0.9);
        let policy = random_policy(&mg, seed + 100);
        let e = evaluate(&mg, None, &policy).unwrap();
        let n_a = mg.n_joint_actions();
        for s in 0..mg.n_states() {
            let pi = policy.joint(&mg, None, s);
            let v: f64 = (0..n_a).map(|a| pi[a] * e.q(s, a)).sum();
            assert!((v - e.v[s]).abs() < 1e-9);
            for a in 0..n_a {
                let cont: f64 = mg.next_states(s, a).iter().map(|&(ns, p)| p * e.v[ns]).sum();
                assert!((e.q(s, a) - mg.mean_reward(s, a) - 0.9 * cont).abs() < 1e-9);
            }
        }
        assert!((e.d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn stationary_weighting_is_invariant() {
    let mg = random_game(7, 0.8);
    let policy = random_policy(&mg, 8);
    let e = evaluate(&mg, None, &policy).unwrap();
    let n_a = mg.n_joint_actions();
    // d_S(s') = Σ_{s,a} d(s,a) P(s'|s,a)
    for target in 0..mg.n_states() {
        let lhs: f64 = (0..n_a).map(|a| e.d(target, a)).sum();
        let mut rhs = 0.0;
        for s in 0..mg.n_states() {
            for a in 0..n_a {
                for &(ns, p) in mg.next_states(s, a) {
                    if ns == target {
                        rhs += e.d(s, a) * p;
                    }
                }
            }
        }
        assert!((lhs - rhs).abs() < 1e-10);
    }
}

#[test]
fn scalar_feature_fixed_point() {
    let mg = single_state(0.5);
    let f = FeatureMap::new(1, std::sync::Arc::new(|_: &[usize], _: &[usize]| vec![1.0]));
    let sol = solve_mspbe(&mg, None, &FactoredPolicy::uniform(&mg), &f).unwrap();
    assert!((sol.omega[0] - 2.0).abs() < 1e-12);
    assert!(sol.residual <= MSPBE_RESIDUAL_TOL);
}

#[test]
fn tabular_features_recover_q() {
    for seed in 0..5 {
        let mg = random_game(seed, 0.9);
        let policy = random_policy(&mg, seed + 50);
        let e = evaluate(&mg, None, &policy).unwrap();
        let rows: Vec<Row> = (0..mg.n_states())
            .flat_map(|s| (0..mg.n_joint_actions()).map(move |a| (s, a)))
            .filter(|&(s, a)| e.d(s, a) > 0.0)
            .map(|(s, a)| (mg.decode_state(s), mg.decode_action(a)))
            .collect();
        let f = FeatureMap::tabular(&rows);
        let sol = solve_mspbe(&mg, None, &policy, &f).unwrap();
        assert!(sol.residual <= MSPBE_RESIDUAL_TOL);
        for (k, (ls, la)) in rows.iter().enumerate() {
            let s = mg.encode_state(ls).unwrap();
            let a = mg.encode_action(la).unwrap();
            assert!((sol.omega[k] - e.q(s, a)).abs() <= 1e-8);
        }
    }
}

#[test]
fn raw_cosine_features_are_rejected() {
    let g = CosineToyMG::new(3, CosineMode::OneStep).unwrap();
    let mg = g.to_finite_mg().unwrap();
    let err = solve_mspbe(&mg, None, &FactoredPolicy::uniform(&mg), &g.critic_features()).unwrap_err();
    assert!(matches!(
        err,
        Error::Assumption {
            assumption: crate::consensus::Assumption::Features,
            ..
        }
    ));
}

#[test]
fn reduced_cosine_features_fit_exactly() {
    // the team reward is linear in the action indicators, so the
    // projection is exact and Φω reproduces Q on every weighted row
    let g = CosineToyMG::new(3, CosineMode::OneStep).unwrap();
    let mg = g.to_finite_mg().unwrap();
    let rows: Vec<Row> = (0..8usize)
        .map(|c| (g.state_locals(), (0..3).map(|i| (c >> i) & 1).collect()))
        .collect();
    let f = g.critic_features().reduce(&rows).unwrap();
    assert_eq!(f.dim(), 4);
    let policy = FactoredPolicy::uniform(&mg);
    let sol = solve_mspbe(&mg, None, &policy, &f).unwrap();
    assert!(sol.residual <= MSPBE_RESIDUAL_TOL);
    let s = mg.encode_state(&g.state_locals()).unwrap();
    for (ls, la) in &rows {
        let phi = f.phi(ls, la).unwrap();
        let fit: f64 = phi.iter().zip(&sol.omega).map(|(x, w)| x * w).sum();
        assert!((fit - g.reward(la)).abs() < 1e-9);
        assert_eq!(mg.encode_state(ls).unwrap(), s);
    }
}

fn cosine_pair(n: usize) -> (FiniteMG, ObservationMap) {
    let g = CosineToyMG::new(n, CosineMode::OneStep).unwrap();
    let mg = g.to_finite_mg().unwrap();
    let obs = g.observations(&mg).unwrap();
    (mg, obs)
}

#[test]
fn cosine_optima_agree() {
    for n in [2, 3] {
        let (mg, obs) = cosine_pair(n);
        let r = sharing_report(&mg, &obs).unwrap();
        assert_eq!(r.state_based, 1.0);
        assert!(r.lossless, "{r:?}");
    }
}

#[test]
fn kuba_shared_optimum_is_split_probability() {
    for (n, expected) in [(2usize, 0.25), (4, 0.0625)] {
        let mg = kuba_game(n).unwrap();
        let obs = kuba_observations(&mg).unwrap();
        let r = sharing_report(&mg, &obs).unwrap();
        assert_eq!(r.state_based, 1.0);
        assert_eq!(r.obs_based, 1.0);
        assert!(r.shared_stochastic);
        // p^{N/2}(1-p)^{N/2} peaks at p = 1/2
        let half = n as i32 / 2;
        let analytic = 0.5f64.powi(half) * 0.5f64.powi(half);
        assert!((analytic - expected).abs() < 1e-15);
        assert!((r.obs_based_shared - expected).abs() < 1e-9);
        assert!(!r.lossless);
    }
}

#[test]
fn triangle_optima_agree() {
    let mg = triangle_game().unwrap();
    let obs = triangle_observations(&mg).unwrap();
    let r = sharing_report(&mg, &obs).unwrap();
    // 48 terms of 1/48 each
    assert!((r.state_based - 1.0).abs() < 1e-12);
    assert!(r.lossless, "{r:?}");
}

#[test]
fn triangle_shared_policy_is_the_parity_rule() {
    let mg = triangle_game().unwrap();
    let obs = triangle_observations(&mg).unwrap();
    let best = brute_force_optimum(&mg, Some(&obs), PolicyClass::ObsBasedShared, DEFAULT_BUDGET).unwrap();
    let e = evaluate(&mg, Some(&obs), &best.policy).unwrap();
    assert!((e.j - 1.0).abs() < 1e-12);
}

#[test]
fn budget_is_enforced() {
    let mg = triangle_game().unwrap();
    let obs = triangle_observations(&mg).unwrap();
    let err = brute_force_optimum(&mg, Some(&obs), PolicyClass::ObsBased, 10).unwrap_err();
    assert!(matches!(err, Error::BudgetExceeded { .. }));
}

#[test]
fn policy_iteration_matches_value_iteration() {
    for seed in 0..5 {
        let mg = random_game(seed + 30, 0.9);
        let best = brute_force_optimum(&mg, None, PolicyClass::StateBased, DEFAULT_BUDGET).unwrap();
        // value iteration oracle
        let mut v = vec![0.0; mg.n_states()];
        for _ in 0..2000 {
            v = (0..mg.n_states())
                .map(|s| {
                    (0..mg.n_joint_actions())
                        .map(|a| {
                            mg.mean_reward(s, a)
                                + 0.9 * mg.next_states(s, a).iter().map(|&(ns, p)| p * v[ns]).sum::<f64>()
                        })
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .collect();
        }
        let j: f64 = mg.initial().iter().zip(&v).map(|(m, v)| m * v).sum();
        assert!((best.value - j).abs() < 1e-8, "seed {seed}: {} vs {j}", best.value);
    }
}

#[test]
fn repeated_cosine_observation_search() {
    let g = CosineToyMG::new(3, CosineMode::Repeated).unwrap();
    let mg = g.to_finite_mg().unwrap();
    let obs = g.observations(&mg).unwrap();
    let r = sharing_report(&mg, &obs).unwrap();
    // +1 every step, discounted
    assert!((r.state_based - 1.0 / (1.0 - 0.95)).abs() < 1e-9);
    assert!((r.obs_based_shared - r.state_based).abs() < 1e-9);
}

#[test]
fn policy_validation() {
    assert!(FactoredPolicy::state_based(vec![vec![vec![0.6, 0.6]]]).is_err());
    assert!(FactoredPolicy::new(
        PolicyInput::Observation,
        vec![vec![vec![1.0, 0.0]], vec![vec![0.0, 1.0]]],
        true
    )
    .is_err());
    let mg = kuba_game(2).unwrap();
    let p = FactoredPolicy::shared(vec![vec![0.5, 0.5]], 2).unwrap();
    assert!(p.check(&mg, None).is_err());
}
