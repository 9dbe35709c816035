//! Backward-induction construction of the estimated value functions.
//!
//! Three agent families share the sweep in [`build_value_tables`]:
//!
//! - `Rrl`: perturbs each backup by the best of `M` Gaussian draws against
//!   the dominant feature of the pair (the successor feature with the
//!   largest inverse-Gram weighted norm).
//! - `Orrl`: perturbs through the centralized features, picking the most
//!   optimistic draw independently per successor, plus a second-order width
//!   term.
//! - `Ucb`: a deterministic bonus built from the expected inverse-Gram
//!   widths of the centralized features.
//! - `Baseline`: the full-likelihood agent's deterministic bonus on the
//!   dominant feature.

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::MnlError;
use crate::estimators::CoreEstimate;
use crate::linalg::GramMatrix;
use crate::model;
use crate::spec::{Action, FeatureVec, MnlMdpSpec, State};
use crate::Result;

/// Which value-function construction a sweep uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlgorithmKind {
    Rrl,
    Orrl,
    Ucb,
    Baseline,
}

impl AlgorithmKind {
    pub fn is_randomized(self) -> bool {
        matches!(self, AlgorithmKind::Rrl | AlgorithmKind::Orrl)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AlgorithmKind::Rrl => "rrl",
            AlgorithmKind::Orrl => "orrl",
            AlgorithmKind::Ucb => "ucb",
            AlgorithmKind::Baseline => "baseline",
        }
    }
}

/// The noise vectors drawn for one horizon step of one episode.
#[derive(Clone, Debug)]
pub struct PerturbationSet {
    pub samples: Vec<DVector<f64>>,
    pub sigma: f64,
}

impl PerturbationSet {
    /// Largest inner product of `phi` against the stored samples.
    pub fn best_inner(&self, phi: &FeatureVec) -> f64 {
        self.samples
            .iter()
            .map(|xi| phi.dot(xi))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest inner product of a dense vector against the stored samples.
    pub fn best_inner_dense(&self, v: &DVector<f64>) -> f64 {
        self.samples
            .iter()
            .map(|xi| v.dot(xi))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Draw `m` i.i.d. samples from `N(0, sigma^2 gram^{-1})`.
pub fn sample_perturbations<R: Rng + ?Sized>(
    gram: &GramMatrix,
    sigma: f64,
    m: usize,
    rng: &mut R,
) -> Result<PerturbationSet> {
    if m == 0 {
        return Err(MnlError::InvalidArgument(
            "at least one perturbation sample is required".into(),
        ));
    }
    if sigma < 0.0 {
        return Err(MnlError::InvalidArgument(
            "sigma must be nonnegative".into(),
        ));
    }
    Ok(PerturbationSet {
        samples: gram.sample_inv_gaussians(sigma, m, rng),
        sigma,
    })
}

/// Index (within the reachable list) of the successor whose feature has the
/// largest `gram^{-1}`-weighted norm, with ties broken toward the lowest
/// index. Returns the index and the squared weighted norm.
pub fn dominant_feature_index(
    spec: &MnlMdpSpec,
    gram: &GramMatrix,
    s: State,
    a: Action,
) -> Result<(usize, f64)> {
    let feats = spec.features(s, a);
    if feats.is_empty() {
        return Err(MnlError::EmptyReachableSet { state: s, action: a });
    }
    let mut best = 0;
    let mut best_norm = f64::NEG_INFINITY;
    for (j, phi) in feats.iter().enumerate() {
        let n = gram.inv_quad_feature(phi);
        if n > best_norm {
            best = j;
            best_norm = n;
        }
    }
    Ok((best, best_norm))
}

/// The dominant feature itself.
pub fn dominant_feature<'a>(
    spec: &'a MnlMdpSpec,
    gram: &GramMatrix,
    s: State,
    a: Action,
) -> Result<&'a FeatureVec> {
    let (idx, _) = dominant_feature_index(spec, gram, s, a)?;
    Ok(&spec.features(s, a)[idx])
}

fn expected_next_value(
    spec: &MnlMdpSpec,
    probs: &[f64],
    v_next: &[f64],
    s: State,
    a: Action,
) -> f64 {
    let mut total = 0.0;
    for (j, &succ) in spec.reachable(s, a).iter().enumerate() {
        total += probs[j] * v_next[succ];
    }
    total
}

/// Randomized backup on the dominant feature:
/// `min{ r + sum_s' P V + max_m phihat^T xi_m, H }`.
pub fn backup_rrl(
    spec: &MnlMdpSpec,
    theta: &DVector<f64>,
    gram: &GramMatrix,
    perturbs: &PerturbationSet,
    v_next: &[f64],
    s: State,
    a: Action,
) -> Result<f64> {
    let mut probs = Vec::new();
    model::probs_into(spec, theta, s, a, &mut probs);
    let expected = expected_next_value(spec, &probs, v_next, s, a);
    let phi_hat = dominant_feature(spec, gram, s, a)?;
    let noise = perturbs.best_inner(phi_hat);
    Ok((spec.reward(s, a) + expected + noise).min(spec.horizon as f64))
}

/// Slot indices of a group whose features are all one-hot. The centralized
/// features of such a group vanish outside these slots, which turns the
/// inverse-Gram widths below into small in-group sums.
fn one_hot_slots(feats: &[FeatureVec]) -> Option<Vec<usize>> {
    feats
        .iter()
        .map(|f| match f {
            FeatureVec::OneHot { index, .. } => Some(*index),
            FeatureVec::Dense(_) => None,
        })
        .collect()
}

/// Randomized backup on centralized features with a per-successor optimistic
/// sample choice and a second-order width term:
/// `min{ r + sum P V + Lambda, H }` with
/// `Lambda = sum_s' P(s') max_m phibar(s')^T xi_m
///           + 3 H beta^2 max_s' ||phi||^2_{B^{-1}}`.
pub fn backup_orrl(
    spec: &MnlMdpSpec,
    theta: &DVector<f64>,
    gram: &GramMatrix,
    perturbs: &PerturbationSet,
    beta: f64,
    v_next: &[f64],
    s: State,
    a: Action,
) -> Result<f64> {
    let mut probs = Vec::new();
    model::probs_into(spec, theta, s, a, &mut probs);
    let expected = expected_next_value(spec, &probs, v_next, s, a);
    let h_f = spec.horizon as f64;
    let feats = spec.features(s, a);
    let mut noise = 0.0;
    let mut max_width = 0.0f64;
    if let Some(slots) = one_hot_slots(feats) {
        // phibar_j^T xi = xi[slot_j] - sum_i p_i xi[slot_i]
        for (j, &slot) in slots.iter().enumerate() {
            let best = perturbs
                .samples
                .iter()
                .map(|xi| {
                    let proj: f64 = slots.iter().zip(&probs).map(|(&i, p)| p * xi[i]).sum();
                    xi[slot] - proj
                })
                .fold(f64::NEG_INFINITY, f64::max);
            noise += probs[j] * best;
            max_width = max_width.max(gram.inverse()[(slot, slot)]);
        }
    } else {
        for (j, phi) in feats.iter().enumerate() {
            let centered =
                model::centralized_feature(spec, theta, s, a, spec.reachable(s, a)[j])?;
            noise += probs[j] * perturbs.best_inner_dense(&centered);
            max_width = max_width.max(gram.inv_quad_feature(phi));
        }
    }
    let bonus = noise + 3.0 * h_f * beta * beta * max_width;
    Ok((spec.reward(s, a) + expected + bonus).min(h_f))
}

/// Deterministic optimistic backup:
/// `r + sum P V + H beta sum_s' P(s') ||phibar(s')||_{B^{-1}}
///  + 3 H beta^2 max_s' ||phi||^2_{B^{-1}}`, without truncation (the value
/// table clips `V`, not `Q`).
pub fn backup_ucb(
    spec: &MnlMdpSpec,
    theta: &DVector<f64>,
    gram: &GramMatrix,
    beta: f64,
    v_next: &[f64],
    s: State,
    a: Action,
) -> Result<f64> {
    let mut probs = Vec::new();
    model::probs_into(spec, theta, s, a, &mut probs);
    let expected = expected_next_value(spec, &probs, v_next, s, a);
    let h_f = spec.horizon as f64;
    let feats = spec.features(s, a);
    let mut first_order = 0.0;
    let mut max_width = 0.0f64;
    if let Some(slots) = one_hot_slots(feats) {
        // ||phibar_j||^2 = inv[j,j] - 2 (inv p)_j + p^T inv p on group slots
        let inv = gram.inverse();
        let w: Vec<f64> = slots
            .iter()
            .map(|&sj| slots.iter().zip(&probs).map(|(&si, p)| p * inv[(sj, si)]).sum())
            .collect();
        let quad: f64 = w.iter().zip(&probs).map(|(wj, p)| p * wj).sum();
        for (j, &slot) in slots.iter().enumerate() {
            let width_sq = (inv[(slot, slot)] - 2.0 * w[j] + quad).max(0.0);
            first_order += probs[j] * width_sq.sqrt();
            max_width = max_width.max(inv[(slot, slot)]);
        }
    } else {
        for (j, phi) in feats.iter().enumerate() {
            let centered =
                model::centralized_feature(spec, theta, s, a, spec.reachable(s, a)[j])?;
            first_order += probs[j] * gram.inv_quad(&centered).max(0.0).sqrt();
            max_width = max_width.max(gram.inv_quad_feature(phi));
        }
    }
    let bonus = h_f * beta * first_order + 3.0 * h_f * beta * beta * max_width;
    Ok(spec.reward(s, a) + expected + bonus)
}

/// Deterministic backup of the full-likelihood baseline:
/// `min{ r + sum P V + width * ||phihat||_{A^{-1}}, H }`.
pub fn backup_baseline(
    spec: &MnlMdpSpec,
    theta: &DVector<f64>,
    gram: &GramMatrix,
    width: f64,
    v_next: &[f64],
    s: State,
    a: Action,
) -> Result<f64> {
    let mut probs = Vec::new();
    model::probs_into(spec, theta, s, a, &mut probs);
    let expected = expected_next_value(spec, &probs, v_next, s, a);
    let (_, norm_sq) = dominant_feature_index(spec, gram, s, a)?;
    let bonus = width * norm_sq.max(0.0).sqrt();
    Ok((spec.reward(s, a) + expected + bonus).min(spec.horizon as f64))
}

/// Scalar inputs of one backward sweep, fixed for the episode.
#[derive(Clone, Copy, Debug)]
pub struct SweepParams {
    pub kind: AlgorithmKind,
    /// Number of perturbation samples per horizon step (randomized kinds).
    pub num_samples: usize,
    /// Perturbation scale (randomized kinds).
    pub sigma: f64,
    /// Confidence radius (orrl, ucb).
    pub beta: f64,
    /// Full bonus coefficient of the baseline, multiplying the dominant
    /// feature's weighted norm.
    pub ucb_width: f64,
}

/// Per-horizon state-action values produced by one backward sweep.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ValueTables {
    pub kind: AlgorithmKind,
    /// `q[h][s][a]` for h in 0..H.
    pub q: Vec<Vec<Vec<f64>>>,
    /// `v[h][s]` for h in 0..=H; the terminal layer is identically zero.
    pub v: Vec<Vec<f64>>,
}

impl ValueTables {
    /// Greedy action with lowest-index tie-breaking.
    pub fn greedy_action(&self, h: usize, s: State) -> Action {
        let row = &self.q[h][s];
        let mut best = 0;
        for (a, &val) in row.iter().enumerate().skip(1) {
            if val > row[best] {
                best = a;
            }
        }
        best
    }

    /// The full greedy policy, `policy[h][s]`.
    pub fn greedy_policy(&self) -> Vec<Vec<Action>> {
        (0..self.q.len())
            .map(|h| (0..self.q[h].len()).map(|s| self.greedy_action(h, s)).collect())
            .collect()
    }

    /// Estimated value of the episode's start state.
    pub fn initial_value(&self, s: State) -> f64 {
        self.v[0][s]
    }
}

/// Run one backward sweep over all states and actions.
///
/// `estimates` holds one entry per horizon step. For randomized kinds, one
/// fresh perturbation set per horizon step is drawn up front (ascending in
/// h), then shared by every (s, a) backup at that step.
pub fn build_value_tables<R: Rng + ?Sized>(
    spec: &MnlMdpSpec,
    estimates: &[&CoreEstimate],
    params: &SweepParams,
    rng: &mut R,
) -> Result<ValueTables> {
    let horizon = spec.horizon;
    if estimates.len() != horizon {
        return Err(MnlError::InvalidArgument(format!(
            "expected {horizon} per-horizon estimates, got {}",
            estimates.len()
        )));
    }
    let perturbs: Option<Vec<PerturbationSet>> = if params.kind.is_randomized() {
        let mut sets = Vec::with_capacity(horizon);
        for est in estimates.iter().take(horizon) {
            sets.push(sample_perturbations(
                est.gram(),
                params.sigma,
                params.num_samples,
                rng,
            )?);
        }
        Some(sets)
    } else {
        None
    };

    let num_states = spec.num_states;
    let num_actions = spec.num_actions;
    let mut q = vec![vec![vec![0.0; num_actions]; num_states]; horizon];
    let mut v = vec![vec![0.0; num_states]; horizon + 1];
    for h in (0..horizon).rev() {
        let est = estimates[h];
        let theta = est.theta();
        let gram = est.gram();
        let (v_next, v_cur) = {
            let (left, right) = v.split_at_mut(h + 1);
            (&*right[0], &mut left[h])
        };
        for s in 0..num_states {
            for a in 0..num_actions {
                q[h][s][a] = match params.kind {
                    AlgorithmKind::Rrl => backup_rrl(
                        spec,
                        theta,
                        gram,
                        &perturbs.as_ref().unwrap()[h],
                        v_next,
                        s,
                        a,
                    )?,
                    AlgorithmKind::Orrl => backup_orrl(
                        spec,
                        theta,
                        gram,
                        &perturbs.as_ref().unwrap()[h],
                        params.beta,
                        v_next,
                        s,
                        a,
                    )?,
                    AlgorithmKind::Ucb => {
                        backup_ucb(spec, theta, gram, params.beta, v_next, s, a)?
                    }
                    AlgorithmKind::Baseline => {
                        backup_baseline(spec, theta, gram, params.ucb_width, v_next, s, a)?
                    }
                };
            }
            let best = q[h][s].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            v_cur[s] = match params.kind {
                AlgorithmKind::Ucb => best.min(spec.horizon as f64),
                _ => best,
            };
        }
    }
    Ok(ValueTables { kind: params.kind, q, v })
}
