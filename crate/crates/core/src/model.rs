//! Softmax transition model: probabilities, per-episode negative
//! log-likelihood, and its derivatives.
//!
//! For a pair (s, a) with reachable successors `S_{s,a}` and parameter
//! `theta`, the transition probability of successor s' is
//! `exp(phi(s,a,s')^T theta) / sum_j exp(phi(s,a,s_j)^T theta)`. All
//! exponentials subtract the maximum logit first; logits can reach
//! `±l_phi * l_theta` and a naive `exp` would overflow long before that at
//! realistic bounds.

use nalgebra::{DMatrix, DVector};

use crate::error::MnlError;
use crate::spec::{Action, MnlMdpSpec, State, TransitionDist};
use crate::Result;

fn check_theta(spec: &MnlMdpSpec, theta: &DVector<f64>) -> Result<()> {
    if theta.len() != spec.dim {
        return Err(MnlError::DimensionMismatch {
            expected: spec.dim,
            got: theta.len(),
        });
    }
    Ok(())
}

fn check_pair(spec: &MnlMdpSpec, s: State, a: Action) -> Result<()> {
    if s >= spec.num_states || a >= spec.num_actions {
        return Err(MnlError::InvalidArgument(format!(
            "state {s} / action {a} out of range"
        )));
    }
    if spec.reachable(s, a).is_empty() {
        return Err(MnlError::EmptyReachableSet { state: s, action: a });
    }
    Ok(())
}

/// Write the logits `phi(s,a,s_j)^T theta` for every reachable successor.
fn logits_into(spec: &MnlMdpSpec, theta: &DVector<f64>, s: State, a: Action, out: &mut Vec<f64>) {
    out.clear();
    out.extend(spec.features(s, a).iter().map(|phi| phi.dot(theta)));
}

/// Softmax of `logits` written over `logits` in place, with max subtraction.
fn softmax_in_place(logits: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut denom = 0.0;
    for z in logits.iter_mut() {
        *z = (*z - max).exp();
        denom += *z;
    }
    for z in logits.iter_mut() {
        *z /= denom;
    }
}

/// Transition probabilities over the reachable successors of (s, a) under
/// parameter `theta`.
pub fn transition_probs(
    spec: &MnlMdpSpec,
    theta: &DVector<f64>,
    s: State,
    a: Action,
) -> Result<TransitionDist> {
    check_theta(spec, theta)?;
    check_pair(spec, s, a)?;
    let mut probs = Vec::new();
    logits_into(spec, theta, s, a, &mut probs);
    softmax_in_place(&mut probs);
    Ok(TransitionDist {
        support: spec.reachable(s, a).to_vec(),
        probs,
    })
}

/// Probabilities only, reusing a scratch buffer. Hot-path variant of
/// [`transition_probs`].
pub(crate) fn probs_into(
    spec: &MnlMdpSpec,
    theta: &DVector<f64>,
    s: State,
    a: Action,
    out: &mut Vec<f64>,
) {
    logits_into(spec, theta, s, a, out);
    softmax_in_place(out);
}

/// Negative log-likelihood of one observed transition:
/// `-log P_theta(observed | s, a)`, evaluated in log-sum-exp form.
pub fn per_episode_loss(
    spec: &MnlMdpSpec,
    theta: &DVector<f64>,
    s: State,
    a: Action,
    observed: State,
) -> Result<f64> {
    check_theta(spec, theta)?;
    check_pair(spec, s, a)?;
    let obs_idx = spec.successor_index(s, a, observed)?;
    let mut logits = Vec::new();
    logits_into(spec, theta, s, a, &mut logits);
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_denom = logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    Ok(log_denom - (logits[obs_idx] - max))
}

/// Gradient of the per-episode loss:
/// `sum_j (P_theta(s_j | s, a) - 1{s_j = observed}) phi(s, a, s_j)`.
pub fn loss_gradient(
    spec: &MnlMdpSpec,
    theta: &DVector<f64>,
    s: State,
    a: Action,
    observed: State,
) -> Result<DVector<f64>> {
    check_theta(spec, theta)?;
    check_pair(spec, s, a)?;
    let obs_idx = spec.successor_index(s, a, observed)?;
    let mut grad = DVector::zeros(spec.dim);
    let mut probs = Vec::new();
    probs_into(spec, theta, s, a, &mut probs);
    for (j, phi) in spec.features(s, a).iter().enumerate() {
        let y = if j == obs_idx { 1.0 } else { 0.0 };
        phi.add_scaled_into(&mut grad, probs[j] - y);
    }
    Ok(grad)
}

/// Hessian of the per-episode loss in the centralized form
/// `sum_j P_theta(s_j | s,a) phibar_j phibar_j^T` with
/// `phibar_j = phi_j - E_{s~P_theta}[phi]`. Symmetric positive semidefinite;
/// independent of the observed successor.
pub fn loss_hessian(
    spec: &MnlMdpSpec,
    theta: &DVector<f64>,
    s: State,
    a: Action,
) -> Result<DMatrix<f64>> {
    check_theta(spec, theta)?;
    check_pair(spec, s, a)?;
    let mut hess = DMatrix::zeros(spec.dim, spec.dim);
    let mut probs = Vec::new();
    probs_into(spec, theta, s, a, &mut probs);
    add_hessian_into(spec, s, a, &probs, &mut hess, 1.0);
    Ok(hess)
}

/// Centralized feature `phi(s,a,s') - E_{s~P_theta(.|s,a)}[phi(s,a,s)]`.
pub fn centralized_feature(
    spec: &MnlMdpSpec,
    theta: &DVector<f64>,
    s: State,
    a: Action,
    s_prime: State,
) -> Result<DVector<f64>> {
    check_theta(spec, theta)?;
    check_pair(spec, s, a)?;
    let idx = spec.successor_index(s, a, s_prime)?;
    let mut probs = Vec::new();
    probs_into(spec, theta, s, a, &mut probs);
    let mut out = DVector::zeros(spec.dim);
    spec.features(s, a)[idx].add_scaled_into(&mut out, 1.0);
    for (j, phi) in spec.features(s, a).iter().enumerate() {
        phi.add_scaled_into(&mut out, -probs[j]);
    }
    Ok(out)
}

/// Gradient of the transition probability itself:
/// `grad P_theta(s' | s, a) = P_theta(s' | s, a) * phibar(s, a, s'; theta)`.
pub fn transition_grad(
    spec: &MnlMdpSpec,
    theta: &DVector<f64>,
    s: State,
    a: Action,
    s_prime: State,
) -> Result<DVector<f64>> {
    let idx = spec.successor_index(s, a, s_prime)?;
    let mut probs = Vec::new();
    probs_into(spec, theta, s, a, &mut probs);
    Ok(centralized_feature(spec, theta, s, a, s_prime)? * probs[idx])
}

/// Accumulate `scale * (gradient, Hessian)` of one observation into dense
/// buffers. This is the inner loop of the full-likelihood refit, so the
/// one-hot case writes straight into the group's slots: the Hessian block is
/// `diag(p) - p p^T` and the gradient entries are `p - y`.
pub(crate) fn accumulate_loss_terms(
    spec: &MnlMdpSpec,
    theta: &DVector<f64>,
    s: State,
    a: Action,
    obs_idx: usize,
    grad: &mut DVector<f64>,
    mut hess: Option<&mut DMatrix<f64>>,
    probs_buf: &mut Vec<f64>,
    scale: f64,
) {
    let feats = spec.features(s, a);
    let u = feats.len();
    let mut slots = [0usize; 32];
    let all_one_hot = u <= 32
        && feats.iter().enumerate().all(|(j, f)| match f {
            crate::spec::FeatureVec::OneHot { index, .. } => {
                slots[j] = *index;
                true
            }
            crate::spec::FeatureVec::Dense(_) => false,
        });
    if all_one_hot {
        // Softmax over the group's slots, then straight accumulation: the
        // gradient entries are p - y and the Hessian block is
        // diag(p) - p p^T.
        let theta_s = theta.as_slice();
        probs_buf.clear();
        probs_buf.extend(slots[..u].iter().map(|&i| theta_s[i]));
        softmax_in_place(probs_buf);
        for j in 0..u {
            let y = if j == obs_idx { 1.0 } else { 0.0 };
            grad[slots[j]] += scale * (probs_buf[j] - y);
        }
        if let Some(h) = hess.as_deref_mut() {
            let d = h.nrows();
            let cols = h.as_mut_slice();
            for i in 0..u {
                let si = slots[i];
                let pi = scale * probs_buf[i];
                cols[si * d + si] += pi;
                for j in 0..u {
                    cols[slots[j] * d + si] -= pi * probs_buf[j];
                }
            }
        }
    } else {
        probs_into(spec, theta, s, a, probs_buf);
        for (j, phi) in feats.iter().enumerate() {
            let y = if j == obs_idx { 1.0 } else { 0.0 };
            phi.add_scaled_into(grad, scale * (probs_buf[j] - y));
        }
        if let Some(h) = hess {
            add_hessian_into(spec, s, a, probs_buf, h, scale);
        }
    }
}

/// Loss of one observation with a caller-provided scratch buffer; the hot
/// path of full-likelihood objective evaluations.
pub(crate) fn loss_value_with_buf(
    spec: &MnlMdpSpec,
    theta: &DVector<f64>,
    s: State,
    a: Action,
    obs_idx: usize,
    buf: &mut Vec<f64>,
) -> f64 {
    logits_into(spec, theta, s, a, buf);
    let max = buf.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_denom = buf.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    log_denom - (buf[obs_idx] - max)
}

/// `hess += scale * sum_j p_j phibar_j phibar_j^T`.
fn add_hessian_into(
    spec: &MnlMdpSpec,
    s: State,
    a: Action,
    probs: &[f64],
    hess: &mut DMatrix<f64>,
    scale: f64,
) {
    let feats = spec.features(s, a);
    let all_one_hot = feats
        .iter()
        .all(|f| matches!(f, crate::spec::FeatureVec::OneHot { .. }));
    if all_one_hot {
        let slot = |j: usize| match feats[j] {
            crate::spec::FeatureVec::OneHot { index, .. } => index,
            _ => unreachable!(),
        };
        for i in 0..feats.len() {
            let si = slot(i);
            hess[(si, si)] += scale * probs[i];
            for j in 0..feats.len() {
                hess[(si, slot(j))] -= scale * probs[i] * probs[j];
            }
        }
    } else {
        let mut mean = DVector::zeros(spec.dim);
        for (j, phi) in feats.iter().enumerate() {
            phi.add_scaled_into(&mut mean, probs[j]);
        }
        let mut centered = DVector::zeros(spec.dim);
        for (j, phi) in feats.iter().enumerate() {
            centered.copy_from(&mean);
            centered.neg_mut();
            phi.add_scaled_into(&mut centered, 1.0);
            hess.ger(scale * probs[j], &centered, &centered, 1.0);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn zero_core_gives_uniform_probabilities() {
        let spec = envs::build_riverswim(4, 3).unwrap();
        let theta = DVector::zeros(spec.dim);
        // right action at the middle state s_1 has three successors
        let dist = transition_probs(&spec, &theta, 1, 1).unwrap();
        assert_eq!(dist.support.len(), 3);
        for p in &dist.probs {
            assert_relative_eq!(*p, 1.0 / 3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn hand_built_two_successor_softmax() {
        // one-hot features e_0, e_1 with theta = (log 0.4, log 0.6)
        let spec = two_state_spec();
        let theta = DVector::from_vec(vec![0.4f64.ln(), 0.6f64.ln()]);
        let dist = transition_probs(&spec, &theta, 0, 0).unwrap();
        assert_relative_eq!(dist.probs[0], 0.4, epsilon = 1e-12);
        assert_relative_eq!(dist.probs[1], 0.6, epsilon = 1e-12);
    }

    #[test]
    fn riverswim_middle_state_matches_kernel() {
        let spec = envs::build_riverswim(4, 12).unwrap();
        let dist = transition_probs(&spec, &spec.true_cores[0], 1, 1).unwrap();
        assert_eq!(dist.support, vec![0, 1, 2]);
        assert_relative_eq!(dist.probs[0], 0.05, epsilon = 1e-12);
        assert_relative_eq!(dist.probs[1], 0.6, epsilon = 1e-12);
        assert_relative_eq!(dist.probs[2], 0.35, epsilon = 1e-12);
    }

    #[test]
    fn loss_is_log_cardinality_for_uniform_model() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let spec = envs::random_mnl_mdp(6, 2, 5, 4, 3, 1.0, &mut rng).unwrap();
        let theta = DVector::zeros(spec.dim);
        for s in 0..spec.num_states {
            for a in 0..spec.num_actions {
                let succ = spec.reachable(s, a).to_vec();
                let loss = per_episode_loss(&spec, &theta, s, a, succ[0]).unwrap();
                assert_relative_eq!(loss, (succ.len() as f64).ln(), epsilon = 1e-12);
                assert!(loss >= 0.0);
            }
        }
    }

    #[test]
    fn loss_matches_negative_log_probability() {
        let spec = envs::build_riverswim(4, 12).unwrap();
        let theta = &spec.true_cores[0];
        let loss = per_episode_loss(&spec, theta, 1, 1, 1).unwrap();
        assert_relative_eq!(loss, -(0.6f64.ln()), epsilon = 1e-12);
    }

    #[test]
    fn rejects_unreachable_observation() {
        let spec = envs::build_riverswim(4, 12).unwrap();
        let theta = DVector::zeros(spec.dim);
        // left action at state 2 deterministically reaches state 1
        let err = per_episode_loss(&spec, &theta, 2, 0, 3).unwrap_err();
        assert!(matches!(err, MnlError::InvalidObservation { .. }));
    }

    #[test]
    fn rejects_dimension_mismatch() {
        let spec = envs::build_riverswim(4, 12).unwrap();
        let theta = DVector::zeros(spec.dim + 1);
        assert!(matches!(
            transition_probs(&spec, &theta, 0, 0).unwrap_err(),
            MnlError::DimensionMismatch { .. }
        ));
    }

    #[test]
    fn gradient_on_opposite_one_hot_pair() {
        let spec = two_state_spec();
        let theta = DVector::zeros(2);
        // uniform probabilities, observe successor 1 (the e_1 feature)
        let g = loss_gradient(&spec, &theta, 0, 0, 1).unwrap();
        assert_relative_eq!(g[0], 0.5, epsilon = 1e-12);
        assert_relative_eq!(g[1], -0.5, epsilon = 1e-12);
    }

    #[test]
    fn expected_gradient_vanishes_at_true_core() {
        let spec = envs::build_riverswim(4, 12).unwrap();
        let theta = &spec.true_cores[0];
        for (s, a) in [(0, 1), (1, 1), (2, 1), (3, 1), (2, 0)] {
            let dist = transition_probs(&spec, theta, s, a).unwrap();
            let mut expected = DVector::zeros(spec.dim);
            for (j, &succ) in dist.support.iter().enumerate() {
                expected += loss_gradient(&spec, theta, s, a, succ).unwrap() * dist.probs[j];
            }
            assert!(expected.norm() < 1e-12, "score mean {}", expected.norm());
        }
    }

    #[test]
    fn gradient_norm_is_bounded_by_twice_l_phi() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        for seed in 0..20 {
            let mut srng = ChaCha20Rng::seed_from_u64(seed);
            let spec = envs::random_mnl_mdp(5, 2, 4, 3, 2, 2.0, &mut srng).unwrap();
            let theta = crate::envs::sample_ball(spec.dim, spec.l_theta, &mut rng);
            for s in 0..spec.num_states {
                for a in 0..spec.num_actions {
                    for &succ in spec.reachable(s, a) {
                        let g = loss_gradient(&spec, &theta, s, a, succ).unwrap();
                        assert!(g.norm() <= 2.0 * spec.l_phi + 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn single_successor_has_zero_derivatives() {
        let spec = envs::build_riverswim(4, 12).unwrap();
        let theta = DVector::zeros(spec.dim);
        // left at state 3 reaches only state 2
        let h = loss_hessian(&spec, &theta, 3, 0).unwrap();
        assert_eq!(h.amax(), 0.0);
        let c = centralized_feature(&spec, &theta, 3, 0, 2).unwrap();
        assert_eq!(c.amax(), 0.0);
        let tg = transition_grad(&spec, &theta, 3, 0, 2).unwrap();
        assert_eq!(tg.amax(), 0.0);
        assert_eq!(per_episode_loss(&spec, &theta, 3, 0, 2).unwrap(), 0.0);
    }

    #[test]
    fn centralized_features_have_zero_probability_weighted_mean() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        for seed in 0..30 {
            let mut srng = ChaCha20Rng::seed_from_u64(100 + seed);
            let spec = envs::random_mnl_mdp(5, 2, 4, 4, 2, 1.5, &mut srng).unwrap();
            let theta = crate::envs::sample_ball(spec.dim, spec.l_theta, &mut rng);
            for s in 0..spec.num_states {
                for a in 0..spec.num_actions {
                    let dist = transition_probs(&spec, &theta, s, a).unwrap();
                    let mut mean = DVector::zeros(spec.dim);
                    for (j, &succ) in dist.support.iter().enumerate() {
                        mean +=
                            centralized_feature(&spec, &theta, s, a, succ).unwrap() * dist.probs[j];
                    }
                    assert!(mean.norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn uniform_two_successor_centralized_feature_is_half_difference() {
        let spec = two_state_spec();
        let theta = DVector::zeros(2);
        let c = centralized_feature(&spec, &theta, 0, 0, 0).unwrap();
        // (f0 - f1) / 2 with f0 = e0, f1 = e1
        assert_relative_eq!(c[0], 0.5, epsilon = 1e-15);
        assert_relative_eq!(c[1], -0.5, epsilon = 1e-15);
    }

    #[test]
    fn transition_grads_sum_to_zero() {
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        let spec = envs::random_mnl_mdp(5, 3, 6, 4, 2, 1.5, &mut rng).unwrap();
        let theta = crate::envs::sample_ball(spec.dim, spec.l_theta, &mut rng);
        for s in 0..spec.num_states {
            for a in 0..spec.num_actions {
                let mut total = DVector::zeros(spec.dim);
                for &succ in spec.reachable(s, a) {
                    total += transition_grad(&spec, &theta, s, a, succ).unwrap();
                }
                assert!(total.norm() < 1e-12);
            }
        }
    }

    /// Minimal instance: one (s, a) pair with two successors carrying
    /// opposite one-hot features e_0 and e_1.
    fn two_state_spec() -> MnlMdpSpec {
        use crate::spec::FeatureVec;
        MnlMdpSpec::new(
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
            2.0,
        )
        .unwrap()
    }
}
