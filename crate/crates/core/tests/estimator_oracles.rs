//! Estimator correctness against brute-force oracles: grid and random
//! search for the constrained updates, Monte Carlo consistency for the
//! full-likelihood baseline, and the concentration/potential monitors at
//! small scale.

use mnl_mdp::agents::{self, AgentConfig, AgentState};
use mnl_mdp::envs;
use mnl_mdp::estimators::{project_weighted_ball, MleState, OmdState, OnsState};
use mnl_mdp::model;
use mnl_mdp::planner::AlgorithmKind;
use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn random_spd(dim: usize, rng: &mut ChaCha20Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(dim, dim, |_, _| rng.random::<f64>() * 2.0 - 1.0);
    &a * a.transpose() + DMatrix::identity(dim, dim) * 0.3
}

fn boundary_grid(dim: usize, radius: f64, count: usize) -> Vec<DVector<f64>> {
    match dim {
        2 => (0..count)
            .map(|i| {
                let angle = 2.0 * std::f64::consts::PI * i as f64 / count as f64;
                DVector::from_vec(vec![radius * angle.cos(), radius * angle.sin()])
            })
            .collect(),
        3 => {
            // Fibonacci sphere
            let golden = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
            (0..count)
                .map(|i| {
                    let y = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
                    let r = (1.0 - y * y).sqrt();
                    let t = golden * i as f64;
                    DVector::from_vec(vec![
                        radius * r * t.cos(),
                        radius * y,
                        radius * r * t.sin(),
                    ])
                })
                .collect()
        }
        _ => panic!("boundary grid only built for d = 2, 3"),
    }
}

#[test]
fn projection_beats_grid_and_random_search() {
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    let mut tested = 0;
    while tested < 100 {
        let dim = 2 + tested % 2;
        let w = random_spd(dim, &mut rng);
        let z = DVector::from_fn(dim, |_, _| rng.random::<f64>() * 4.0 - 2.0);
        let radius = 0.5 + rng.random::<f64>();
        let p = project_weighted_ball(&z, &w, radius).unwrap();
        assert!(p.norm() <= radius * (1.0 + 1e-9), "infeasible projection");
        let objective = |theta: &DVector<f64>| {
            let diff = theta - &z;
            diff.dot(&(&w * &diff))
        };
        let ours = objective(&p);
        for point in boundary_grid(dim, radius, 10_000) {
            assert!(
                ours <= objective(&point) + 1e-9,
                "boundary point beats projection by {}",
                ours - objective(&point)
            );
        }
        for _ in 0..10_000 {
            let candidate = envs::sample_ball(dim, radius, &mut rng);
            assert!(ours <= objective(&candidate) + 1e-9);
        }
        tested += 1;
    }
}

#[test]
fn projection_reference_case_on_a_disk_grid() {
    // W = diag(4, 1), z = (2, 0), radius 1: optimum (1, 0).
    let w = DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 1.0]);
    let z = DVector::from_vec(vec![2.0, 0.0]);
    let p = project_weighted_ball(&z, &w, 1.0).unwrap();
    let objective = |theta: &DVector<f64>| {
        let diff = theta - &z;
        diff.dot(&(&w * &diff))
    };
    let ours = objective(&p);
    let side = 100; // 10^4 points covering the unit disk
    for i in 0..side {
        for j in 0..side {
            let x = -1.0 + 2.0 * i as f64 / (side - 1) as f64;
            let y = -1.0 + 2.0 * j as f64 / (side - 1) as f64;
            let cand = DVector::from_vec(vec![x, y]);
            if cand.norm() <= 1.0 {
                assert!(ours <= objective(&cand) + 1e-9);
            }
        }
    }
    assert!((p[0] - 1.0).abs() < 1e-6 && p[1].abs() < 1e-9);
}

#[test]
fn ons_update_minimizes_its_surrogate_on_a_grid() {
    // d = 2 one-hot instance: compare the update against a dense grid search
    // of the surrogate objective over the ball.
    use mnl_mdp::spec::{FeatureVec, MnlMdpSpec};
    let spec = MnlMdpSpec::new(
        2,
        1,
        1,
        2,
        vec![vec![0, 1], vec![0, 1]],
        vec![
            vec![
                FeatureVec::OneHot { dim: 2, index: 0 },
                FeatureVec::OneHot { dim: 2, index: 1 },
            ],
            vec![
                FeatureVec::OneHot { dim: 2, index: 0 },
                FeatureVec::OneHot { dim: 2, index: 1 },
            ],
        ],
        vec![0.0, 0.0],
        vec![DVector::zeros(2)],
        1.0,
        1.0,
    )
    .unwrap();
    let mut state = OnsState::new(2, 0.5, 1.0).unwrap();
    state.theta = DVector::from_vec(vec![0.4, -0.2]);
    let theta_old = state.theta.clone();
    let grad = model::loss_gradient(&spec, &theta_old, 0, 0, 1).unwrap();
    state.update(&spec, 0, 0, 1).unwrap();
    let gram_new = state.gram.matrix().clone();
    let surrogate = |theta: &DVector<f64>| {
        let diff = theta - &theta_old;
        0.5 * diff.dot(&(&gram_new * &diff)) + diff.dot(&grad)
    };
    let ours = surrogate(&state.theta);
    let side = 100;
    for i in 0..side {
        for j in 0..side {
            let x = -1.0 + 2.0 * i as f64 / (side - 1) as f64;
            let y = -1.0 + 2.0 * j as f64 / (side - 1) as f64;
            let cand = DVector::from_vec(vec![x, y]);
            if cand.norm() <= 1.0 {
                assert!(
                    ours <= surrogate(&cand) + 1e-4,
                    "grid point beats update: {} vs {}",
                    ours,
                    surrogate(&cand)
                );
            }
        }
    }
}

#[test]
fn omd_update_minimizes_its_surrogate_against_random_search() {
    let mut rng = ChaCha20Rng::seed_from_u64(31);
    let spec = envs::random_mnl_mdp(4, 2, 2, 3, 1, 1.0, &mut rng).unwrap();
    let eta = 0.7;
    let mut state = OmdState::new(spec.dim, eta, 1.0).unwrap();
    for step in 0..10 {
        let s = rng.random_range(0..spec.num_states);
        let a = rng.random_range(0..spec.num_actions);
        let succ = spec.reachable(s, a);
        let obs = succ[rng.random_range(0..succ.len())];
        let theta_old = state.theta.clone();
        let grad = model::loss_gradient(&spec, &theta_old, s, a, obs).unwrap();
        let hess = model::loss_hessian(&spec, &theta_old, s, a).unwrap();
        let b_tilde = state.gram.matrix() + &hess * eta;
        state.update(&spec, s, a, obs).unwrap();
        let surrogate = |theta: &DVector<f64>| {
            let diff = theta - &theta_old;
            diff.dot(&(&b_tilde * &diff)) / (2.0 * eta) + theta.dot(&grad)
        };
        let ours = surrogate(&state.theta);
        for _ in 0..10_000 {
            let cand = envs::sample_ball(spec.dim, spec.l_theta, &mut rng);
            assert!(
                ours <= surrogate(&cand) + 1e-9,
                "step {step}: random candidate beats update by {}",
                surrogate(&cand) - ours
            );
        }
    }
}

#[test]
fn mle_recovers_the_kernel_from_samples() {
    // 10^4 samples from a known core in the ball interior: fitted transition
    // probabilities within 0.02 total variation per pair.
    let spec = envs::build_riverswim(4, 1).unwrap();
    let theta_star = spec.true_cores[0].clone();
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let mut state = MleState::new(spec.dim, 1e-4).unwrap();
    let pairs: Vec<(usize, usize)> = (0..spec.num_states)
        .flat_map(|s| (0..spec.num_actions).map(move |a| (s, a)))
        .collect();
    for i in 0..10_000 {
        let (s, a) = pairs[i % pairs.len()];
        let dist = model::transition_probs(&spec, &theta_star, s, a).unwrap();
        let j = dist.sample_index(rng.random());
        state.push(s, a, dist.support[j]);
    }
    state.refit(&spec).unwrap();
    for (s, a) in pairs {
        let fitted = model::transition_probs(&spec, &state.theta, s, a).unwrap();
        let truth = model::transition_probs(&spec, &theta_star, s, a).unwrap();
        let tv: f64 = fitted
            .probs
            .iter()
            .zip(&truth.probs)
            .map(|(p, q)| (p - q).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv < 0.02, "({s},{a}) total variation {tv}");
    }
}

#[test]
fn concentration_monitor_holds_at_small_scale() {
    // Short runs under the theoretical schedules: the Gram-norm estimation
    // error stays inside the stated radius for every episode.
    let spec = envs::build_riverswim(4, 6).unwrap();
    for (kind, scale) in [(AlgorithmKind::Rrl, 1.0), (AlgorithmKind::Ucb, 1.0)] {
        let config = AgentConfig {
            lambda: match kind {
                AlgorithmKind::Rrl => spec.l_phi * spec.l_phi,
                _ => agents::lambda_mirror_descent(
                    spec.dim,
                    spec.l_phi,
                    spec.l_theta,
                    spec.max_reachable(),
                ),
            },
            delta: 0.05,
            ..AgentConfig::new(kind)
        };
        for seed in 0..3 {
            let mut agent =
                AgentState::new(&spec, config.clone(), ChaCha20Rng::seed_from_u64(seed)).unwrap();
            let mut env_rng = ChaCha20Rng::seed_from_u64(100 + seed);
            for _ in 0..150 {
                agent.run_episode(&spec, &mut env_rng).unwrap();
                let ratio = agent.concentration_ratio(&spec, 0.1).unwrap();
                assert!(
                    ratio <= scale,
                    "{kind:?} seed {seed}: concentration ratio {ratio}"
                );
            }
        }
    }
}

#[test]
fn elliptical_potential_bound_holds_on_short_runs() {
    let spec = envs::build_riverswim(4, 6).unwrap();
    let kappa = 0.05;
    let config = AgentConfig {
        kappa: Some(kappa),
        sigma_scale: 0.01,
        ..AgentConfig::new(AlgorithmKind::Rrl)
    };
    for seed in 0..3 {
        let mut agent =
            AgentState::new(&spec, config.clone(), ChaCha20Rng::seed_from_u64(seed)).unwrap();
        agent.monitor_elliptical = true;
        let mut env_rng = ChaCha20Rng::seed_from_u64(200 + seed);
        let episodes = 300;
        let mut per_h_sums = vec![0.0; spec.horizon];
        for _ in 0..episodes {
            let record = agent.run_episode(&spec, &mut env_rng).unwrap();
            for (h, term) in record.elliptical_terms.unwrap().iter().enumerate() {
                per_h_sums[h] += term;
            }
        }
        let bound = agents::elliptical_bound(
            episodes,
            spec.dim,
            kappa,
            config.lambda,
            spec.max_reachable(),
            spec.l_phi,
        );
        for (h, total) in per_h_sums.iter().enumerate() {
            assert!(
                *total <= bound,
                "seed {seed} h {h}: potential {total} above bound {bound}"
            );
        }
    }
}

#[test]
fn baseline_estimates_converge_in_total_variation() {
    // Consistency smoke test: after thousands of visits the fitted kernel is
    // close to the truth on the visited pairs.
    let spec = envs::build_riverswim(4, 6).unwrap();
    let config = AgentConfig {
        kappa: Some(0.05),
        c_beta: 0.02,
        share_horizons: true,
        ..AgentConfig::new(AlgorithmKind::Baseline)
    };
    let mut agent = AgentState::new(&spec, config, ChaCha20Rng::seed_from_u64(8)).unwrap();
    let mut env_rng = ChaCha20Rng::seed_from_u64(9);
    let mut visits = vec![0usize; spec.num_states * spec.num_actions];
    for _ in 0..900 {
        let record = agent.run_episode(&spec, &mut env_rng).unwrap();
        for (s, a) in record.states.iter().zip(&record.actions) {
            visits[s * spec.num_actions + a] += 1;
        }
    }
    let theta_hat = agent.estimates[0].theta().clone();
    for s in 0..spec.num_states {
        for a in 0..spec.num_actions {
            if visits[s * spec.num_actions + a] >= 5000 {
                let fitted = model::transition_probs(&spec, &theta_hat, s, a).unwrap();
                let truth = model::transition_probs(&spec, &spec.true_cores[0], s, a).unwrap();
                let tv: f64 = fitted
                    .probs
                    .iter()
                    .zip(&truth.probs)
                    .map(|(p, q)| (p - q).abs())
                    .sum::<f64>()
                    / 2.0;
                assert!(tv < 0.05, "({s},{a}) total variation {tv}");
            }
        }
    }
}
