//! Environment definition for multinomial-logistic MDPs.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::MnlError;
use crate::Result;

/// State index.
pub type State = usize;
/// Action index.
pub type Action = usize;

/// A feature vector attached to one (state, action, successor) triple.
///
/// Tabular embeddings produce one-hot features; storing them as an index
/// keeps the per-sample likelihood work proportional to the support size
/// instead of the ambient dimension. Dense features go through the general
/// path. Both variants behave identically through the accessors below.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum FeatureVec {
    Dense(DVector<f64>),
    OneHot { dim: usize, index: usize },
}

impl FeatureVec {
    pub fn dim(&self) -> usize {
        match self {
            FeatureVec::Dense(v) => v.len(),
            FeatureVec::OneHot { dim, .. } => *dim,
        }
    }

    pub fn norm(&self) -> f64 {
        match self {
            FeatureVec::Dense(v) => v.norm(),
            FeatureVec::OneHot { .. } => 1.0,
        }
    }

    /// Inner product with a dense vector.
    pub fn dot(&self, v: &DVector<f64>) -> f64 {
        match self {
            FeatureVec::Dense(f) => f.dot(v),
            FeatureVec::OneHot { index, .. } => v[*index],
        }
    }

    /// `out += c * phi`.
    pub fn add_scaled_into(&self, out: &mut DVector<f64>, c: f64) {
        match self {
            FeatureVec::Dense(f) => out.axpy(c, f, 1.0),
            FeatureVec::OneHot { index, .. } => out[*index] += c,
        }
    }

    /// `m += c * phi * phi^T` (full matrix, not just a triangle).
    pub fn add_outer_into(&self, m: &mut nalgebra::DMatrix<f64>, c: f64) {
        match self {
            FeatureVec::Dense(f) => m.ger(c, f, f, 1.0),
            FeatureVec::OneHot { index, .. } => m[(*index, *index)] += c,
        }
    }

    pub fn to_dense(&self) -> DVector<f64> {
        match self {
            FeatureVec::Dense(v) => v.clone(),
            FeatureVec::OneHot { dim, index } => {
                let mut v = DVector::zeros(*dim);
                v[*index] = 1.0;
                v
            }
        }
    }
}

/// A probability distribution over the reachable successors of one
/// (state, action) pair. `support` is ordered and `probs` is parallel to it.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TransitionDist {
    pub support: Vec<State>,
    pub probs: Vec<f64>,
}

impl TransitionDist {
    /// Sample a successor index (into `support`) by inverse CDF.
    pub fn sample_index(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (j, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return j;
            }
        }
        self.probs.len() - 1
    }
}

/// Full environment definition: geometry, features, rewards, and the true
/// per-horizon transition cores (used only to simulate the environment and
/// to compute oracle quantities).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MnlMdpSpec {
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    pub dim: usize,
    /// Ordered successor lists, indexed by `s * num_actions + a`.
    reachable: Vec<Vec<State>>,
    /// Features parallel to `reachable`: `features[sa][j]` is the feature of
    /// the j-th successor of that pair.
    features: Vec<Vec<FeatureVec>>,
    /// Known rewards in [0, 1], indexed by `s * num_actions + a`.
    rewards: Vec<f64>,
    /// True transition cores, one per horizon step.
    pub true_cores: Vec<DVector<f64>>,
    /// Upper bound on feature norms.
    pub l_phi: f64,
    /// Radius of the parameter ball.
    pub l_theta: f64,
}

impl MnlMdpSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        dim: usize,
        reachable: Vec<Vec<State>>,
        features: Vec<Vec<FeatureVec>>,
        rewards: Vec<f64>,
        true_cores: Vec<DVector<f64>>,
        l_phi: f64,
        l_theta: f64,
    ) -> Result<Self> {
        let spec = Self {
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
        };
        spec.validate()?;
        Ok(spec)
    }

    fn pair_index(&self, s: State, a: Action) -> usize {
        s * self.num_actions + a
    }

    /// Ordered reachable successor set of (s, a).
    pub fn reachable(&self, s: State, a: Action) -> &[State] {
        &self.reachable[self.pair_index(s, a)]
    }

    /// Features of the reachable successors of (s, a), in support order.
    pub fn features(&self, s: State, a: Action) -> &[FeatureVec] {
        &self.features[self.pair_index(s, a)]
    }

    pub fn reward(&self, s: State, a: Action) -> f64 {
        self.rewards[self.pair_index(s, a)]
    }

    /// Maximum cardinality of the reachable sets.
    pub fn max_reachable(&self) -> usize {
        self.reachable.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Position of `successor` within the reachable list of (s, a).
    pub fn successor_index(&self, s: State, a: Action, successor: State) -> Result<usize> {
        self.reachable(s, a)
            .iter()
            .position(|&x| x == successor)
            .ok_or(MnlError::InvalidObservation {
                state: s,
                action: a,
                observed: successor,
            })
    }

    /// Check every structural invariant of the definition.
    pub fn validate(&self) -> Result<()> {
        let pairs = self.num_states * self.num_actions;
        if self.num_states == 0 || self.num_actions == 0 || self.horizon == 0 || self.dim == 0 {
            return Err(MnlError::InvalidArgument(
                "states, actions, horizon, and dim must be positive".into(),
            ));
        }
        if self.reachable.len() != pairs || self.features.len() != pairs || self.rewards.len() != pairs
        {
            return Err(MnlError::InvalidArgument(format!(
                "expected {pairs} (state, action) entries"
            )));
        }
        if self.true_cores.len() != self.horizon {
            return Err(MnlError::InvalidArgument(format!(
                "expected {} transition cores, got {}",
                self.horizon,
                self.true_cores.len()
            )));
        }
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                let sa = self.pair_index(s, a);
                let succ = &self.reachable[sa];
                if succ.is_empty() {
                    return Err(MnlError::EmptyReachableSet { state: s, action: a });
                }
                if succ.iter().any(|&x| x >= self.num_states) {
                    return Err(MnlError::InvalidArgument(format!(
                        "successor out of range at ({s}, {a})"
                    )));
                }
                if self.features[sa].len() != succ.len() {
                    return Err(MnlError::InvalidArgument(format!(
                        "features and successors disagree at ({s}, {a})"
                    )));
                }
                for f in &self.features[sa] {
                    if f.dim() != self.dim {
                        return Err(MnlError::DimensionMismatch {
                            expected: self.dim,
                            got: f.dim(),
                        });
                    }
                    if f.norm() > self.l_phi + 1e-9 {
                        return Err(MnlError::InvalidArgument(format!(
                            "feature norm {} exceeds the bound {}",
                            f.norm(),
                            self.l_phi
                        )));
                    }
                }
                let r = self.rewards[sa];
                if !(0.0..=1.0).contains(&r) {
                    return Err(MnlError::InvalidArgument(format!(
                        "reward {r} at ({s}, {a}) is outside [0, 1]"
                    )));
                }
            }
        }
        for core in &self.true_cores {
            if core.len() != self.dim {
                return Err(MnlError::DimensionMismatch {
                    expected: self.dim,
                    got: core.len(),
                });
            }
            if core.norm() > self.l_theta + 1e-9 {
                return Err(MnlError::InvalidArgument(format!(
                    "transition core norm {} exceeds the ball radius {}",
                    core.norm(),
                    self.l_theta
                )));
            }
        }
        Ok(())
    }

    /// Serialize the full definition to JSON.
    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }

    /// Load a definition from JSON and validate it.
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: MnlMdpSpec = serde_json::from_str(text)
            .map_err(|e| MnlError::InvalidArgument(format!("malformed spec JSON: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn one_hot_behaves_like_its_dense_expansion() {
        let f = FeatureVec::OneHot { dim: 5, index: 2 };
        let d = f.to_dense();
        let v = DVector::from_fn(5, |i, _| (i as f64) - 1.5);
        assert_eq!(f.dot(&v), d.dot(&v));
        assert_eq!(f.norm(), d.norm());

        let mut acc_sparse = DVector::zeros(5);
        let mut acc_dense = DVector::zeros(5);
        f.add_scaled_into(&mut acc_sparse, 0.7);
        FeatureVec::Dense(d).add_scaled_into(&mut acc_dense, 0.7);
        assert_eq!(acc_sparse, acc_dense);
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = envs::build_riverswim(4, 12).unwrap();
        let text = spec.to_json().unwrap();
        let back = MnlMdpSpec::from_json(&text).unwrap();
        assert_eq!(back.num_states, spec.num_states);
        assert_eq!(back.dim, spec.dim);
        assert_eq!(back.true_cores, spec.true_cores);
        for s in 0..4 {
            for a in 0..2 {
                assert_eq!(back.reachable(s, a), spec.reachable(s, a));
                assert_eq!(back.reward(s, a), spec.reward(s, a));
            }
        }
    }

    #[test]
    fn validation_rejects_unreachable_pairs() {
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let spec = envs::random_mnl_mdp(3, 2, 4, 2, 5, 1.0, &mut rng).unwrap();
        let mut broken = spec.clone();
        broken.reachable[0].clear();
        broken.features[0].clear();
        assert!(matches!(
            broken.validate(),
            Err(MnlError::EmptyReachableSet { .. })
        ));
    }

    #[test]
    fn validation_rejects_oversized_rewards() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let spec = envs::random_mnl_mdp(3, 2, 4, 2, 5, 1.0, &mut rng).unwrap();
        let mut broken = spec.clone();
        broken.rewards[1] = 1.5;
        assert!(broken.validate().is_err());
    }
}
