//! Environment constructors: the RiverSwim chain with an exactly-realizable
//! one-hot embedding, and a random instance generator for property tests.

use nalgebra::DVector;
use rand::{Rng, RngExt};
use serde::{Deserialize, Serialize};

use crate::error::MnlError;
use crate::spec::{Action, FeatureVec, MnlMdpSpec, State, TransitionDist};
use crate::Result;

/// A ground-truth tabular kernel: per-horizon transition distributions over
/// fixed successor supports. Supports are shared across horizon steps so the
/// kernel admits a single feature map.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TabularKernel {
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    /// Ordered successor lists, indexed by `s * num_actions + a`.
    pub supports: Vec<Vec<State>>,
    /// `probs[h][sa][j]` is the probability of the j-th successor.
    pub probs: Vec<Vec<Vec<f64>>>,
}

impl TabularKernel {
    pub fn dist(&self, h: usize, s: State, a: Action) -> TransitionDist {
        let sa = s * self.num_actions + a;
        TransitionDist {
            support: self.supports[sa].clone(),
            probs: self.probs[h][sa].clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pairs = self.num_states * self.num_actions;
        if self.supports.len() != pairs || self.probs.len() != self.horizon {
            return Err(MnlError::InvalidArgument("kernel shape mismatch".into()));
        }
        for layer in &self.probs {
            if layer.len() != pairs {
                return Err(MnlError::InvalidArgument("kernel shape mismatch".into()));
            }
            for (sa, p) in layer.iter().enumerate() {
                if p.len() != self.supports[sa].len() {
                    return Err(MnlError::InvalidArgument("kernel support mismatch".into()));
                }
                let total: f64 = p.iter().sum();
                if (total - 1.0).abs() > 1e-12 || p.iter().any(|&x| x < 0.0) {
                    return Err(MnlError::InvalidArgument(format!(
                        "probabilities at pair {sa} sum to {total}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Actions of the chain environment.
pub const LEFT: Action = 0;
/// See [`LEFT`].
pub const RIGHT: Action = 1;

/// Build the n-state RiverSwim chain with horizon `h`.
///
/// Swimming right fights the current: from the leftmost state it stays with
/// probability 0.4 and advances with 0.6; from interior states it slips left
/// with 0.05, stays with 0.6, and advances with 0.35; from the rightmost
/// state it slips left with 0.4 and stays with 0.6, collecting reward 1.
/// Swimming left always succeeds and only the leftmost self-loop pays 0.005.
/// The kernel is the same at every horizon step. The returned definition
/// carries the one-hot embedding of [`tabular_embed`], so the chain is an
/// exactly realizable instance of the softmax transition model.
pub fn build_riverswim(n: usize, h: usize) -> Result<MnlMdpSpec> {
    if n < 3 {
        return Err(MnlError::InvalidArgument(format!(
            "riverswim needs at least 3 states, got {n}"
        )));
    }
    if h == 0 {
        return Err(MnlError::InvalidArgument("horizon must be positive".into()));
    }
    let num_actions = 2;
    let mut supports = vec![Vec::new(); n * num_actions];
    let mut layer = vec![Vec::new(); n * num_actions];
    let mut rewards = vec![0.0; n * num_actions];
    for s in 0..n {
        let left = s * num_actions + LEFT;
        if s == 0 {
            supports[left] = vec![0];
            layer[left] = vec![1.0];
            rewards[left] = 0.005;
        } else {
            supports[left] = vec![s - 1];
            layer[left] = vec![1.0];
        }
        let right = s * num_actions + RIGHT;
        if s == 0 {
            supports[right] = vec![0, 1];
            layer[right] = vec![0.4, 0.6];
        } else if s == n - 1 {
            supports[right] = vec![s - 1, s];
            layer[right] = vec![0.4, 0.6];
            rewards[right] = 1.0;
        } else {
            supports[right] = vec![s - 1, s, s + 1];
            layer[right] = vec![0.05, 0.6, 0.35];
        }
    }
    let kernel = TabularKernel {
        num_states: n,
        num_actions,
        horizon: h,
        supports,
        probs: vec![layer; h],
    };
    let embed = tabular_embed(&kernel)?;
    let l_theta = embed
        .theta_star
        .iter()
        .map(|t| t.norm())
        .fold(0.0, f64::max)
        * 1.5;
    MnlMdpSpec::new(
        n,
        num_actions,
        h,
        embed.dim,
        kernel.supports.clone(),
        embed.features,
        rewards,
        embed.theta_star,
        1.0,
        l_theta,
    )
}

/// Result of embedding a tabular kernel into the softmax model.
pub struct TabularEmbedding {
    pub dim: usize,
    /// One-hot features, indexed like the kernel's supports.
    pub features: Vec<Vec<FeatureVec>>,
    /// One core per horizon step, reproducing the kernel exactly.
    pub theta_star: Vec<DVector<f64>>,
}

/// Embed a tabular kernel exactly: every (s, a, s') triple gets its own
/// one-hot slot, so `d` is the total support size, and the core entries are
/// the log-probabilities centered within each (s, a) group. Softmax is
/// shift-invariant within a group, so centering picks the minimum-norm
/// representative.
pub fn tabular_embed(kernel: &TabularKernel) -> Result<TabularEmbedding> {
    kernel.validate()?;
    let pairs = kernel.num_states * kernel.num_actions;
    let dim: usize = kernel.supports.iter().map(Vec::len).sum();
    let mut features = Vec::with_capacity(pairs);
    let mut offsets = Vec::with_capacity(pairs);
    let mut slot = 0;
    for support in &kernel.supports {
        offsets.push(slot);
        let group: Vec<FeatureVec> = support
            .iter()
            .map(|_| {
                let f = FeatureVec::OneHot { dim, index: slot };
                slot += 1;
                f
            })
            .collect();
        features.push(group);
    }
    let mut theta_star = Vec::with_capacity(kernel.horizon);
    for layer in &kernel.probs {
        let mut core = DVector::zeros(dim);
        for (sa, probs) in layer.iter().enumerate() {
            if probs.iter().any(|&p| p <= 0.0) {
                return Err(MnlError::InvalidKernel(format!(
                    "pair {sa} has a zero probability on its support"
                )));
            }
            let logs: Vec<f64> = probs.iter().map(|p| p.ln()).collect();
            let mean = logs.iter().sum::<f64>() / logs.len() as f64;
            for (j, log_p) in logs.iter().enumerate() {
                core[offsets[sa] + j] = log_p - mean;
            }
        }
        theta_star.push(core);
    }
    Ok(TabularEmbedding {
        dim,
        features,
        theta_star,
    })
}

/// Draw a point uniformly from the radius-`r` ball in `d` dimensions.
pub fn sample_ball<R: Rng + ?Sized>(d: usize, r: f64, rng: &mut R) -> DVector<f64> {
    use rand_distr::{Distribution, StandardNormal};
    let mut v = DVector::from_fn(d, |_, _| StandardNormal.sample(rng));
    let norm = v.norm();
    if norm == 0.0 {
        return v;
    }
    let u: f64 = rng.random();
    v *= r * u.powf(1.0 / d as f64) / norm;
    v
}

/// Generate a random instance for property tests: features uniform in the
/// unit ball, cores uniform in the `l_theta` ball, supports of random size
/// between 1 and `max_reachable`, rewards uniform in [0, 1].
pub fn random_mnl_mdp<R: Rng + ?Sized>(
    num_states: usize,
    num_actions: usize,
    dim: usize,
    max_reachable: usize,
    horizon: usize,
    l_theta: f64,
    rng: &mut R,
) -> Result<MnlMdpSpec> {
    if max_reachable == 0 || max_reachable > num_states {
        return Err(MnlError::InvalidArgument(format!(
            "max_reachable {max_reachable} must be in 1..={num_states}"
        )));
    }
    if dim == 0 || num_states == 0 || num_actions == 0 || horizon == 0 {
        return Err(MnlError::InvalidArgument("sizes must be positive".into()));
    }
    let l_phi = 1.0;
    let pairs = num_states * num_actions;
    let mut reachable = Vec::with_capacity(pairs);
    let mut features = Vec::with_capacity(pairs);
    for _ in 0..pairs {
        let size = rng.random_range(1..=max_reachable);
        let mut succ = rand::seq::index::sample(rng, num_states, size).into_vec();
        succ.sort_unstable();
        features.push(
            succ.iter()
                .map(|_| FeatureVec::Dense(sample_ball(dim, l_phi, rng)))
                .collect::<Vec<_>>(),
        );
        reachable.push(succ);
    }
    let rewards = (0..pairs).map(|_| rng.random::<f64>()).collect();
    let true_cores = (0..horizon)
        .map(|_| sample_ball(dim, l_theta, rng))
        .collect();
    MnlMdpSpec::new(
        num_states,
        num_actions,
        horizon,
        dim,
        reachable,
        features,
        rewards,
        true_cores,
        l_phi,
        l_theta,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn riverswim_matches_published_probabilities() {
        let spec = build_riverswim(4, 12).unwrap();
        let theta = &spec.true_cores[0];
        // right at s_1: slip/stay/advance
        let d = model::transition_probs(&spec, theta, 1, RIGHT).unwrap();
        assert_eq!(d.support, vec![0, 1, 2]);
        for (p, want) in d.probs.iter().zip([0.05, 0.6, 0.35]) {
            assert!((p - want).abs() < 1e-12);
        }
        // left at s_2 is deterministic
        let d = model::transition_probs(&spec, theta, 2, LEFT).unwrap();
        assert_eq!(d.support, vec![1]);
        assert_relative_eq!(d.probs[0], 1.0, epsilon = 1e-15);
        // rewards
        assert_eq!(spec.reward(0, LEFT), 0.005);
        assert_eq!(spec.reward(3, RIGHT), 1.0);
        assert_eq!(spec.reward(1, RIGHT), 0.0);
        assert_eq!(spec.reward(0, RIGHT), 0.0);
    }

    #[test]
    fn riverswim_rejects_tiny_chains() {
        assert!(build_riverswim(2, 5).is_err());
    }

    #[test]
    fn uniform_kernel_embeds_to_zero_core() {
        let kernel = TabularKernel {
            num_states: 2,
            num_actions: 1,
            horizon: 2,
            supports: vec![vec![0, 1], vec![0, 1]],
            probs: vec![vec![vec![0.5, 0.5]; 2]; 2],
        };
        let embed = tabular_embed(&kernel).unwrap();
        for core in &embed.theta_star {
            assert_eq!(core.amax(), 0.0);
        }
    }

    #[test]
    fn quarter_three_quarter_group_gets_centered_logits() {
        let kernel = TabularKernel {
            num_states: 2,
            num_actions: 1,
            horizon: 1,
            supports: vec![vec![0, 1], vec![0, 1]],
            probs: vec![vec![vec![0.25, 0.75], vec![0.5, 0.5]]],
        };
        let embed = tabular_embed(&kernel).unwrap();
        let half_log3 = 3.0f64.ln() / 2.0;
        assert_relative_eq!(embed.theta_star[0][0], -half_log3, epsilon = 1e-14);
        assert_relative_eq!(embed.theta_star[0][1], half_log3, epsilon = 1e-14);
    }

    #[test]
    fn embedding_rejects_zero_probability_on_support() {
        let kernel = TabularKernel {
            num_states: 2,
            num_actions: 1,
            horizon: 1,
            supports: vec![vec![0, 1], vec![0]],
            probs: vec![vec![vec![0.0, 1.0], vec![1.0]]],
        };
        assert!(matches!(
            tabular_embed(&kernel),
            Err(MnlError::InvalidKernel(_))
        ));
    }

    #[test]
    fn random_specs_satisfy_all_invariants() {
        for seed in 0..200 {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let spec = random_mnl_mdp(6, 3, 5, 4, 3, 2.0, &mut rng).unwrap();
            spec.validate().unwrap();
            assert!(spec.max_reachable() <= 4);
        }
    }

    #[test]
    fn deterministic_support_means_zero_loss_gradient() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let spec = random_mnl_mdp(5, 2, 4, 1, 2, 1.0, &mut rng).unwrap();
        let theta = sample_ball(spec.dim, spec.l_theta, &mut rng);
        for s in 0..spec.num_states {
            for a in 0..spec.num_actions {
                let succ = spec.reachable(s, a)[0];
                assert_eq!(
                    model::per_episode_loss(&spec, &theta, s, a, succ).unwrap(),
                    0.0
                );
                let g = model::loss_gradient(&spec, &theta, s, a, succ).unwrap();
                assert_eq!(g.amax(), 0.0);
            }
        }
    }

    #[test]
    fn same_seed_reproduces_the_instance() {
        let mut a = ChaCha20Rng::seed_from_u64(99);
        let mut b = ChaCha20Rng::seed_from_u64(99);
        let sa = random_mnl_mdp(5, 2, 4, 3, 2, 1.0, &mut a).unwrap();
        let sb = random_mnl_mdp(5, 2, 4, 3, 2, 1.0, &mut b).unwrap();
        assert_eq!(sa.true_cores, sb.true_cores);
        for s in 0..5 {
            for act in 0..2 {
                assert_eq!(sa.reachable(s, act), sb.reachable(s, act));
                assert_eq!(sa.reward(s, act), sb.reward(s, act));
            }
        }
    }

    #[test]
    fn ball_samples_stay_inside() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        for _ in 0..500 {
            let v = sample_ball(6, 2.5, &mut rng);
            assert!(v.norm() <= 2.5 + 1e-12);
        }
    }
}
