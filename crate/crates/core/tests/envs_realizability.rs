//! Realizability of the tabular embedding and generator-wide invariants.

use mnl_mdp::envs::{self, LEFT, RIGHT};
use mnl_mdp::estimators::MleState;
use mnl_mdp::model;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha20Rng;

#[test]
fn riverswim_embedding_reproduces_the_kernel_exactly() {
    for n in [3, 4, 8] {
        let spec = envs::build_riverswim(n, 12).unwrap();
        for h in 0..spec.horizon {
            let theta = &spec.true_cores[h];
            for s in 0..n {
                for a in 0..spec.num_actions {
                    let dist = model::transition_probs(&spec, theta, s, a).unwrap();
                    let want: Vec<f64> = if a == LEFT {
                        vec![1.0]
                    } else if s == 0 {
                        vec![0.4, 0.6]
                    } else if s == n - 1 {
                        vec![0.4, 0.6]
                    } else {
                        vec![0.05, 0.6, 0.35]
                    };
                    assert_eq!(dist.probs.len(), want.len());
                    for (p, q) in dist.probs.iter().zip(&want) {
                        assert!(
                            (p - q).abs() < 1e-12,
                            "n={n} h={h} ({s},{a}): {p} vs {q}"
                        );
                    }
                }
            }
        }
    }
}

#[test]
fn feature_and_core_norms_respect_the_bounds() {
    for seed in 0..1000 {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let spec = envs::random_mnl_mdp(5, 2, 4, 3, 2, 1.5, &mut rng).unwrap();
        spec.validate().unwrap();
        for s in 0..spec.num_states {
            for a in 0..spec.num_actions {
                for phi in spec.features(s, a) {
                    assert!(phi.norm() <= spec.l_phi + 1e-12);
                }
            }
        }
        for core in &spec.true_cores {
            assert!(core.norm() <= spec.l_theta + 1e-12);
        }
    }
}

#[test]
fn regularized_mle_recovers_the_embedded_kernel() {
    // Realizability end to end: sample heavily from the embedded chain and
    // check the near-unregularized fit reproduces it.
    let spec = envs::build_riverswim(4, 1).unwrap();
    let theta_star = spec.true_cores[0].clone();
    let mut rng = ChaCha20Rng::seed_from_u64(12);
    let mut state = MleState::new(spec.dim, 1e-6).unwrap();
    let pairs: Vec<(usize, usize)> = (0..spec.num_states)
        .flat_map(|s| (0..spec.num_actions).map(move |a| (s, a)))
        .collect();
    for i in 0..100_000 {
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
        assert!(tv < 0.01, "({s},{a}) total variation {tv}");
    }
}

#[test]
fn riverswim_reward_structure() {
    let spec = envs::build_riverswim(6, 4).unwrap();
    for s in 0..6 {
        for a in 0..2 {
            let want = if s == 0 && a == LEFT {
                0.005
            } else if s == 5 && a == RIGHT {
                1.0
            } else {
                0.0
            };
            assert_eq!(spec.reward(s, a), want);
        }
    }
}
