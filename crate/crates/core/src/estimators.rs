//! Online transition-core estimation.
//!
//! Three estimators share the weighted-norm ball projection
//! [`project_weighted_ball`]:
//!
//! - [`OnsState`]: a Newton-step style update. The Gram matrix accumulates
//!   `kappa/2` times the outer products of every reachable feature, and the
//!   iterate minimizes the linearized loss plus a Gram-norm proximity term
//!   over the parameter ball.
//! - [`OmdState`]: an online-mirror-descent update on local curvature. The
//!   proximity norm is the running sum of loss Hessians evaluated at the
//!   iterates, so no curvature lower bound enters the update.
//! - [`MleState`]: the full-likelihood baseline. It stores every observed
//!   transition and refits a regularized maximum-likelihood estimate from
//!   scratch each episode, which is the per-episode cost profile this crate's
//!   online estimators exist to avoid.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::MnlError;
use crate::linalg::GramMatrix;
use crate::model;
use crate::spec::{Action, MnlMdpSpec, State};
use crate::Result;

/// Relative tolerance of the projection's boundary equation.
const PROJECTION_TOL: f64 = 1e-10;
/// Bisection iteration cap before reporting a numerical failure.
const PROJECTION_MAX_ITERS: usize = 200;

/// `argmin_{||theta|| <= radius} (theta - z)^T W (theta - z)` for positive
/// definite `W`.
///
/// The stationarity condition gives `theta(mu) = (W + mu I)^{-1} W z` with a
/// multiplier `mu >= 0` solving `||theta(mu)|| = radius`. Working in the
/// eigenbasis of `W` makes `||theta(mu)||` a scalar monotone function, found
/// by bisection after growing an upper bracket geometrically. Feasible `z`
/// is returned unchanged.
pub fn project_weighted_ball(
    z: &DVector<f64>,
    w: &DMatrix<f64>,
    radius: f64,
) -> Result<DVector<f64>> {
    if radius <= 0.0 {
        return Err(MnlError::InvalidArgument("radius must be positive".into()));
    }
    if w.nrows() != w.ncols() || w.nrows() != z.len() {
        return Err(MnlError::DimensionMismatch {
            expected: z.len(),
            got: w.nrows(),
        });
    }
    if z.norm() <= radius {
        return Ok(z.clone());
    }
    let eig = w.clone().symmetric_eigen();
    let min_eig = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min_eig <= 0.0 {
        return Err(MnlError::InvalidArgument(format!(
            "weight matrix must be positive definite (min eigenvalue {min_eig})"
        )));
    }
    let y = eig.eigenvectors.transpose() * z;
    let norm_at = |mu: f64| -> f64 {
        let mut total = 0.0;
        for i in 0..y.len() {
            let s = eig.eigenvalues[i] * y[i] / (eig.eigenvalues[i] + mu);
            total += s * s;
        }
        total.sqrt()
    };
    // Bracket: the norm is ||z|| > radius at mu = 0 and decreases to 0.
    let max_eig = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let mut hi = max_eig.max(1.0);
    let mut grow = 0;
    while norm_at(hi) > radius {
        hi *= 2.0;
        grow += 1;
        if grow > 200 {
            return Err(MnlError::NumericalFailure(
                "projection bracket did not close".into(),
            ));
        }
    }
    let mut lo = 0.0;
    let mut mu = hi;
    let mut converged = false;
    for _ in 0..PROJECTION_MAX_ITERS {
        mu = 0.5 * (lo + hi);
        let n = norm_at(mu);
        if (n - radius).abs() <= PROJECTION_TOL * radius {
            converged = true;
            break;
        }
        if n > radius {
            lo = mu;
        } else {
            hi = mu;
        }
    }
    if !converged {
        return Err(MnlError::NumericalFailure(format!(
            "projection bisection did not converge within {PROJECTION_MAX_ITERS} iterations"
        )));
    }
    let scaled = DVector::from_fn(y.len(), |i, _| {
        eig.eigenvalues[i] * y[i] / (eig.eigenvalues[i] + mu)
    });
    Ok(&eig.eigenvectors * scaled)
}

/// Newton-step estimator state: iterate, global Gram matrix, and the
/// curvature lower bound it is scaled by.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OnsState {
    pub theta: DVector<f64>,
    pub gram: GramMatrix,
    pub kappa: f64,
    pub lambda: f64,
    /// Number of updates applied so far; the Gram matrix reflects exactly
    /// this many observations.
    pub updates: usize,
}

impl OnsState {
    pub fn new(dim: usize, kappa: f64, lambda: f64) -> Result<Self> {
        if kappa <= 0.0 {
            return Err(MnlError::InvalidArgument("kappa must be positive".into()));
        }
        Ok(Self {
            theta: DVector::zeros(dim),
            gram: GramMatrix::regularized(dim, lambda)?,
            kappa,
            lambda,
            updates: 0,
        })
    }

    /// One observed transition: grow the Gram matrix by `kappa/2` times the
    /// outer products of every reachable feature of (s, a), then move the
    /// iterate to the ball-constrained minimizer of the quadratic surrogate
    /// `1/2 ||theta - old||^2_A + (theta - old)^T g` with `g` the loss
    /// gradient at the old iterate.
    pub fn update(
        &mut self,
        spec: &MnlMdpSpec,
        s: State,
        a: Action,
        observed: State,
    ) -> Result<()> {
        let grad = model::loss_gradient(spec, &self.theta, s, a, observed)?;
        let half_kappa = self.kappa / 2.0;
        self.gram.update(|m| {
            for phi in spec.features(s, a) {
                phi.add_outer_into(m, half_kappa);
            }
        })?;
        let unconstrained = &self.theta - self.gram.solve(&grad);
        self.theta = project_weighted_ball(&unconstrained, self.gram.matrix(), spec.l_theta)?;
        self.updates += 1;
        Ok(())
    }
}

/// Mirror-descent estimator state: iterate and the running local-curvature
/// Gram matrix.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OmdState {
    pub theta: DVector<f64>,
    pub gram: GramMatrix,
    pub eta: f64,
    pub lambda: f64,
    pub updates: usize,
}

impl OmdState {
    pub fn new(dim: usize, eta: f64, lambda: f64) -> Result<Self> {
        if eta <= 0.0 {
            return Err(MnlError::InvalidArgument(
                "step size must be positive".into(),
            ));
        }
        Ok(Self {
            theta: DVector::zeros(dim),
            gram: GramMatrix::regularized(dim, lambda)?,
            eta,
            lambda,
            updates: 0,
        })
    }

    /// One observed transition. The proximal matrix for the step is
    /// `B + eta * H(old)`, the iterate moves to the ball-constrained
    /// minimizer of `1/(2 eta) ||theta - old||^2_{Btilde} + theta^T g`, and
    /// the stored Gram matrix then absorbs the Hessian re-evaluated at the
    /// new iterate.
    pub fn update(
        &mut self,
        spec: &MnlMdpSpec,
        s: State,
        a: Action,
        observed: State,
    ) -> Result<()> {
        let grad = model::loss_gradient(spec, &self.theta, s, a, observed)?;
        let hess_old = model::loss_hessian(spec, &self.theta, s, a)?;
        let mut b_tilde = self.gram.matrix().clone();
        b_tilde
            .as_mut_slice()
            .iter_mut()
            .zip(hess_old.as_slice())
            .for_each(|(b, h)| *b += self.eta * h);
        let chol = Cholesky::new(b_tilde.clone()).ok_or(MnlError::NotPositiveDefinite)?;
        let unconstrained = &self.theta - chol.solve(&grad) * self.eta;
        self.theta = project_weighted_ball(&unconstrained, &b_tilde, spec.l_theta)?;
        let hess_new = model::loss_hessian(spec, &self.theta, s, a)?;
        self.gram.update(|m| *m += &hess_new)?;
        self.updates += 1;
        Ok(())
    }
}

/// Full-likelihood baseline state: iterate plus the complete sample buffer.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MleState {
    pub theta: DVector<f64>,
    pub buffer: Vec<(State, Action, State)>,
    pub lambda: f64,
}

/// Iteration cap of the refit solver.
const MLE_MAX_ITERS: usize = 100;
/// Projected-gradient residual at which the refit is declared converged.
const MLE_GRAD_TOL: f64 = 1e-8;
/// Backtracking halvings before giving up on a descent step.
const MLE_MAX_HALVINGS: usize = 30;

impl MleState {
    pub fn new(dim: usize, lambda: f64) -> Result<Self> {
        if lambda <= 0.0 {
            return Err(MnlError::InvalidArgument(
                "regularization must be positive".into(),
            ));
        }
        Ok(Self {
            theta: DVector::zeros(dim),
            buffer: Vec::new(),
            lambda,
        })
    }

    pub fn push(&mut self, s: State, a: Action, observed: State) {
        self.buffer.push((s, a, observed));
    }

    /// Regularized objective `sum_i loss_i(theta) + lambda/2 ||theta||^2`
    /// over the whole buffer.
    pub fn objective(&self, spec: &MnlMdpSpec, theta: &DVector<f64>) -> Result<f64> {
        let mut buf = Vec::new();
        let mut total = 0.5 * self.lambda * theta.norm_squared();
        for &(s, a, obs) in &self.buffer {
            let obs_idx = spec.successor_index(s, a, obs)?;
            total += model::loss_value_with_buf(spec, theta, s, a, obs_idx, &mut buf);
        }
        Ok(total)
    }

    /// Refit by damped projected Newton over the full buffer, from scratch:
    /// the reference method re-solves the estimation problem on all samples
    /// each episode, so every call starts at zero and walks the whole
    /// buffer, and the cost grows linearly with the episode count. Returns
    /// the number of Newton iterations used.
    pub fn refit(&mut self, spec: &MnlMdpSpec) -> Result<usize> {
        if self.buffer.is_empty() {
            return Err(MnlError::InvalidArgument(
                "cannot fit an empty sample buffer".into(),
            ));
        }
        let d = spec.dim;
        let project = |v: &DVector<f64>| -> DVector<f64> {
            let n = v.norm();
            if n <= spec.l_theta {
                v.clone()
            } else {
                v * (spec.l_theta / n)
            }
        };
        // Successor positions and group layouts are fixed per sample;
        // resolve them once per refit instead of once per pass.
        let workspace = FitWorkspace::build(spec, &self.buffer)?;
        let objective = |theta: &DVector<f64>, buf: &mut Vec<f64>| -> f64 {
            0.5 * self.lambda * theta.norm_squared() + workspace.loss(spec, theta, buf)
        };
        let mut theta = DVector::zeros(d);
        let mut probs_buf = Vec::new();
        let mut obj = objective(&theta, &mut probs_buf);
        let mut grad = DVector::zeros(d);
        let mut hess = DMatrix::zeros(d, d);
        let mut grad_norm = f64::NAN;
        for iter in 0..MLE_MAX_ITERS {
            grad.fill(0.0);
            hess.fill(0.0);
            workspace.accumulate(spec, &theta, &mut grad, &mut hess, &mut probs_buf);
            grad.axpy(self.lambda, &theta, 1.0);
            for i in 0..d {
                hess[(i, i)] += self.lambda;
            }
            grad_norm = grad.norm();
            let residual = (&theta - project(&(&theta - &grad))).norm();
            if residual <= MLE_GRAD_TOL {
                self.theta = theta;
                return Ok(iter);
            }
            let chol = Cholesky::new(hess.clone()).ok_or(MnlError::NotPositiveDefinite)?;
            let direction = -chol.solve(&grad);
            // Newton decrement: the attainable objective decrease. Once it
            // falls below the objective's floating-point resolution the
            // line search cannot observe progress, so stop here.
            let decrement = -grad.dot(&direction);
            if decrement / 2.0 <= 1e-13 * obj.abs().max(1.0) {
                self.theta = theta;
                return Ok(iter);
            }
            let mut step = 1.0;
            let mut accepted = false;
            for _ in 0..=MLE_MAX_HALVINGS {
                let candidate = project(&(&theta + &direction * step));
                let cand_obj = objective(&candidate, &mut probs_buf);
                if cand_obj < obj {
                    theta = candidate;
                    obj = cand_obj;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                // No descent left at the smallest damping: we are at the
                // solver's floating-point floor.
                self.theta = theta;
                return Ok(iter);
            }
        }
        Err(MnlError::NumericalFailure(format!(
            "likelihood refit did not converge: gradient norm {grad_norm:.3e} after {MLE_MAX_ITERS} iterations on {} samples",
            self.buffer.len()
        )))
    }
}

/// Per-refit sample metadata: every buffer entry reduced to its pair index
/// and observed successor position, plus per-pair slot layouts for one-hot
/// groups. The refit walks all samples once per pass either way; this strips
/// the per-sample lookups out of the inner loop.
struct FitWorkspace {
    /// (pair index, observed successor position) per sample.
    samples: Vec<(u32, u32)>,
    /// One-hot slot list per pair, or None for dense-feature pairs.
    slots: Vec<Option<Vec<usize>>>,
    /// (state, action) per pair index, for the dense fallback.
    pairs: Vec<(State, Action)>,
}

impl FitWorkspace {
    fn build(spec: &MnlMdpSpec, buffer: &[(State, Action, State)]) -> Result<Self> {
        let num_pairs = spec.num_states * spec.num_actions;
        let mut slots = Vec::with_capacity(num_pairs);
        let mut pairs = Vec::with_capacity(num_pairs);
        for s in 0..spec.num_states {
            for a in 0..spec.num_actions {
                pairs.push((s, a));
                let group: Option<Vec<usize>> = spec
                    .features(s, a)
                    .iter()
                    .map(|f| match f {
                        crate::spec::FeatureVec::OneHot { index, .. } => Some(*index),
                        crate::spec::FeatureVec::Dense(_) => None,
                    })
                    .collect();
                slots.push(group);
            }
        }
        let mut samples = Vec::with_capacity(buffer.len());
        for &(s, a, obs) in buffer {
            let idx = spec.successor_index(s, a, obs)?;
            // Single-successor groups contribute exactly zero loss,
            // gradient, and Hessian; skip them up front.
            if spec.reachable(s, a).len() > 1 {
                samples.push(((s * spec.num_actions + a) as u32, idx as u32));
            }
        }
        Ok(Self {
            samples,
            slots,
            pairs,
        })
    }

    /// Sum of per-sample losses at `theta`.
    fn loss(&self, spec: &MnlMdpSpec, theta: &DVector<f64>, buf: &mut Vec<f64>) -> f64 {
        let theta_s = theta.as_slice();
        let mut total = 0.0;
        for &(pair, obs) in &self.samples {
            match &self.slots[pair as usize] {
                Some(group) => {
                    let mut max = f64::NEG_INFINITY;
                    for &slot in group {
                        max = max.max(theta_s[slot]);
                    }
                    let mut denom = 0.0;
                    for &slot in group {
                        denom += (theta_s[slot] - max).exp();
                    }
                    total += denom.ln() - (theta_s[group[obs as usize]] - max);
                }
                None => {
                    let (s, a) = self.pairs[pair as usize];
                    total +=
                        model::loss_value_with_buf(spec, theta, s, a, obs as usize, buf);
                }
            }
        }
        total
    }

    /// Gradient and Hessian of the summed loss at `theta`.
    fn accumulate(
        &self,
        spec: &MnlMdpSpec,
        theta: &DVector<f64>,
        grad: &mut DVector<f64>,
        hess: &mut DMatrix<f64>,
        buf: &mut Vec<f64>,
    ) {
        let d = hess.nrows();
        let theta_s = theta.as_slice().to_vec();
        for &(pair, obs) in &self.samples {
            match &self.slots[pair as usize] {
                Some(group) => {
                    buf.clear();
                    let mut max = f64::NEG_INFINITY;
                    for &slot in group {
                        max = max.max(theta_s[slot]);
                    }
                    let mut denom = 0.0;
                    for &slot in group {
                        let e = (theta_s[slot] - max).exp();
                        denom += e;
                        buf.push(e);
                    }
                    for p in buf.iter_mut() {
                        *p /= denom;
                    }
                    let cols = hess.as_mut_slice();
                    for (i, &si) in group.iter().enumerate() {
                        let pi = buf[i];
                        grad[si] += pi;
                        cols[si * d + si] += pi;
                        for (j, &sj) in group.iter().enumerate() {
                            cols[sj * d + si] -= pi * buf[j];
                        }
                    }
                    grad[group[obs as usize]] -= 1.0;
                }
                None => {
                    let (s, a) = self.pairs[pair as usize];
                    model::accumulate_loss_terms(
                        spec,
                        theta,
                        s,
                        a,
                        obs as usize,
                        grad,
                        Some(hess),
                        buf,
                        1.0,
                    );
                }
            }
        }
    }
}

/// One horizon step's estimator, as consumed by the planner: the current
/// iterate plus the Gram state its bonuses and perturbations are built from.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum CoreEstimate {
    Ons(OnsState),
    Omd(OmdState),
    /// Full-likelihood baseline: the sample buffer plus the same global Gram
    /// machinery the Newton-step agent uses for its confidence widths.
    Mle {
        state: MleState,
        gram: GramMatrix,
        kappa: f64,
        updates: usize,
    },
}

impl CoreEstimate {
    pub fn theta(&self) -> &DVector<f64> {
        match self {
            CoreEstimate::Ons(s) => &s.theta,
            CoreEstimate::Omd(s) => &s.theta,
            CoreEstimate::Mle { state, .. } => &state.theta,
        }
    }

    pub fn gram(&self) -> &GramMatrix {
        match self {
            CoreEstimate::Ons(s) => &s.gram,
            CoreEstimate::Omd(s) => &s.gram,
            CoreEstimate::Mle { gram, .. } => gram,
        }
    }

    /// Number of observed transitions absorbed so far.
    pub fn updates(&self) -> usize {
        match self {
            CoreEstimate::Ons(s) => s.updates,
            CoreEstimate::Omd(s) => s.updates,
            CoreEstimate::Mle { updates, .. } => *updates,
        }
    }
}
