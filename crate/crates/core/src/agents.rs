//! Episode-level agent loops and the hyperparameter schedules.

use std::time::{Duration, Instant};


use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::MnlError;
use crate::estimators::{CoreEstimate, MleState, OmdState, OnsState};
use crate::linalg::GramMatrix;
use crate::model;
use crate::planner::{self, AlgorithmKind, SweepParams, ValueTables};
use crate::spec::{Action, MnlMdpSpec, State};
use crate::stats;
use crate::Result;

/// Analytic lower bound for the pairwise-probability constant: with logits
/// confined to `[-L, L]` for `L = l_phi * l_theta`, every transition
/// probability is at least `exp(-2L) / u`, so any product of two is at least
/// the square of that.
pub fn kappa_lower_bound(l_phi: f64, l_theta: f64, max_reachable: usize) -> f64 {
    let l = l_phi * l_theta;
    let single = (-2.0 * l).exp() / max_reachable as f64;
    single * single
}

/// Confidence radius of the Newton-step estimator after `k - 1` updates.
#[allow(clippy::too_many_arguments)]
pub fn alpha_radius(
    k: usize,
    delta: f64,
    d: usize,
    kappa: f64,
    lambda: f64,
    max_reachable: usize,
    l_phi: f64,
    l_theta: f64,
) -> f64 {
    let k = k.max(1) as f64;
    let d_f = d as f64;
    let u = max_reachable as f64;
    let first = 8.0 * d_f / kappa * (1.0 + k * u * l_phi * l_phi / (d_f * lambda)).ln();
    let doubling = (2.0 * (k * u * l_phi * l_theta).log2()).ceil().max(0.0);
    let second = (32.0 * l_phi * l_theta / 3.0 + 16.0 / kappa)
        * ((1.0 + doubling) * k * k / delta).ln();
    (first + second + 2.0 * 2.0f64.sqrt() + 2.0 * lambda * l_theta * l_theta).sqrt()
}

/// Confidence radius of the mirror-descent estimator after `k - 1` updates,
/// with unit leading constant. Callers that need a calibrated radius apply
/// their own scale on top.
#[allow(clippy::too_many_arguments)]
pub fn beta_radius(
    k: usize,
    delta: f64,
    d: usize,
    lambda: f64,
    max_reachable: usize,
    l_theta: f64,
    horizon: usize,
) -> f64 {
    let k = k.max(1) as f64;
    let d_f = d as f64;
    let u = (max_reachable.max(2)) as f64;
    let log_uk = (u * k).ln();
    let inner = lambda * log_uk
        + log_uk * (horizon as f64 * (1.0 + 2.0 * k).sqrt() / delta).ln()
        + d_f * (1.0 + k / (d_f * lambda)).ln();
    (u.ln() * inner + lambda * l_theta * l_theta).sqrt()
}

/// Step size for the mirror-descent update, half the self-concordance
/// constant `log(u) + 2 (1 + l_phi * l_theta)`.
pub fn default_eta(l_phi: f64, l_theta: f64, max_reachable: usize) -> f64 {
    let u = max_reachable.max(2) as f64;
    (u.ln() + 2.0 * (1.0 + l_phi * l_theta)) / 2.0
}

/// The explicit regularization floor under which the mirror-descent
/// concentration analysis goes through.
pub fn lambda_mirror_descent(d: usize, l_phi: f64, l_theta: f64, max_reachable: usize) -> f64 {
    let alpha = 2.0 * default_eta(l_phi, l_theta, max_reachable);
    let a = 12.0 * 2.0f64.sqrt() * l_phi.powi(3) * alpha;
    let b = 48.0 * l_phi * l_phi * d as f64 * alpha;
    a.max(b)
}

fn sample_count(log_arg: f64) -> usize {
    let phi1 = stats::norm_cdf(1.0);
    (1.0 - log_arg / phi1.ln()).ceil().max(1.0) as usize
}

/// Perturbation scale and sample count of the randomized Newton-step agent
/// at episode `k`: `sigma_k = sigma_scale * H * alpha_k(delta)` and
/// `M = ceil(1 - log H / log Phi(1))`.
pub fn schedule_rrl(k: usize, spec: &MnlMdpSpec, params: &ResolvedParams) -> (f64, usize) {
    let alpha = alpha_radius(
        k,
        params.delta,
        spec.dim,
        params.kappa,
        params.lambda,
        spec.max_reachable(),
        spec.l_phi,
        spec.l_theta,
    );
    let sigma = params.sigma_scale * spec.horizon as f64 * alpha;
    let m = params
        .m_override
        .unwrap_or_else(|| sample_count((spec.horizon as f64).ln()));
    (sigma, m)
}

/// Schedule of the mirror-descent agents at episode `k`.
#[derive(Clone, Copy, Debug)]
pub struct OrrlSchedule {
    pub beta: f64,
    pub sigma: f64,
    pub num_samples: usize,
    pub eta: f64,
}

/// `beta_k = c_beta * sqrt(d) * log(u) * log(kH + 1)`, `sigma_k` proportional
/// to `H * beta_k`, and `M = ceil(1 - log(H u) / log Phi(1))`.
pub fn schedule_orrl(k: usize, spec: &MnlMdpSpec, params: &ResolvedParams) -> OrrlSchedule {
    let u = spec.max_reachable().max(2) as f64;
    let beta = params.c_beta
        * (spec.dim as f64).sqrt()
        * u.ln()
        * ((k * spec.horizon) as f64 + 1.0).ln();
    let sigma = params.sigma_scale * spec.horizon as f64 * beta;
    let m = params
        .m_override
        .unwrap_or_else(|| sample_count((spec.horizon as f64 * u).ln()));
    OrrlSchedule {
        beta,
        sigma,
        num_samples: m,
        eta: params.eta,
    }
}

/// Agent configuration. Scale knobs default to 1; the theoretical schedules
/// are conservative, so benchmark configurations tune them down.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AgentConfig {
    pub kind: AlgorithmKind,
    /// Gram regularization.
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// Scale on the confidence radius (orrl/ucb bonus radius, baseline
    /// bonus width).
    #[serde(default = "default_scale")]
    pub c_beta: f64,
    /// Scale on the perturbation standard deviation.
    #[serde(default = "default_scale")]
    pub sigma_scale: f64,
    /// Fixed perturbation sample count, overriding the schedule formula.
    #[serde(default)]
    pub m_override: Option<usize>,
    /// Mirror-descent step size; defaults to half the self-concordance
    /// constant of the instance.
    #[serde(default)]
    pub eta: Option<f64>,
    /// Curvature constant for the Newton-step Gram matrix and radii;
    /// defaults to the analytic lower bound of the instance.
    #[serde(default)]
    pub kappa: Option<f64>,
    /// Confidence level; clamped below `Phi(-1)/2`.
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Estimate one shared core instead of one per horizon step. Sound for
    /// environments whose kernel does not depend on the step.
    #[serde(default)]
    pub share_horizons: bool,
}

fn default_lambda() -> f64 {
    1.0
}
fn default_scale() -> f64 {
    1.0
}
fn default_delta() -> f64 {
    0.05
}

impl AgentConfig {
    pub fn new(kind: AlgorithmKind) -> Self {
        Self {
            kind,
            lambda: default_lambda(),
            c_beta: default_scale(),
            sigma_scale: default_scale(),
            m_override: None,
            eta: None,
            kappa: None,
            delta: default_delta(),
            share_horizons: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda <= 0.0 {
            return Err(MnlError::InvalidArgument("lambda must be positive".into()));
        }
        if self.c_beta <= 0.0 || self.sigma_scale <= 0.0 {
            return Err(MnlError::InvalidArgument(
                "scale factors must be positive".into(),
            ));
        }
        if self.delta <= 0.0 {
            return Err(MnlError::InvalidArgument("delta must be positive".into()));
        }
        if let Some(kappa) = self.kappa {
            if kappa <= 0.0 {
                return Err(MnlError::InvalidArgument("kappa must be positive".into()));
            }
        }
        if let Some(eta) = self.eta {
            if eta <= 0.0 {
                return Err(MnlError::InvalidArgument(
                    "step size must be positive".into(),
                ));
            }
        }
        if let Some(m) = self.m_override {
            if m == 0 {
                return Err(MnlError::InvalidArgument(
                    "sample count must be at least 1".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Configuration after instance-dependent defaults are resolved.
#[derive(Clone, Copy, Debug)]
pub struct ResolvedParams {
    pub lambda: f64,
    pub c_beta: f64,
    pub sigma_scale: f64,
    pub m_override: Option<usize>,
    pub eta: f64,
    pub kappa: f64,
    pub delta: f64,
}

/// One finished episode: trajectory, responses, and the agent-side compute
/// time (planning plus estimation, excluding environment stepping and
/// monitor bookkeeping).
#[derive(Clone, Debug)]
pub struct EpisodeRecord {
    pub states: Vec<State>,
    pub actions: Vec<Action>,
    pub rewards: Vec<f64>,
    /// Observed successor position within the reachable set, per step.
    pub responses: Vec<usize>,
    pub agent_seconds: f64,
    /// Estimated value of the start state under this episode's tables.
    pub value_at_start: f64,
    /// Per-step `max_s' ||phi||^2` in the inverse Gram norm, recorded before
    /// the step's update when the elliptical monitor is on (Gram matrices of
    /// the Newton-step family only).
    pub elliptical_terms: Option<Vec<f64>>,
}

impl EpisodeRecord {
    pub fn episodic_return(&self) -> f64 {
        self.rewards.iter().sum()
    }
}

/// A running agent: per-horizon estimators, episode counter, the value
/// tables of the current episode, and a private noise stream.
pub struct AgentState {
    pub config: AgentConfig,
    pub params: ResolvedParams,
    pub estimates: Vec<CoreEstimate>,
    /// 1-based index of the next episode to run.
    pub episode: usize,
    pub tables: Option<ValueTables>,
    /// Record per-step inverse-Gram feature widths while running.
    pub monitor_elliptical: bool,
    rng: ChaCha20Rng,
}

impl AgentState {
    pub fn new(spec: &MnlMdpSpec, config: AgentConfig, rng: ChaCha20Rng) -> Result<Self> {
        config.validate()?;
        let u = spec.max_reachable();
        let params = ResolvedParams {
            lambda: config.lambda,
            c_beta: config.c_beta,
            sigma_scale: config.sigma_scale,
            m_override: config.m_override,
            eta: config
                .eta
                .unwrap_or_else(|| default_eta(spec.l_phi, spec.l_theta, u)),
            kappa: config
                .kappa
                .unwrap_or_else(|| kappa_lower_bound(spec.l_phi, spec.l_theta, u)),
            delta: config.delta.min(stats::optimism_floor() - 1e-9).max(1e-12),
        };
        let slots = if config.share_horizons {
            1
        } else {
            spec.horizon
        };
        let mut estimates = Vec::with_capacity(slots);
        for _ in 0..slots {
            estimates.push(match config.kind {
                AlgorithmKind::Rrl => {
                    CoreEstimate::Ons(OnsState::new(spec.dim, params.kappa, params.lambda)?)
                }
                AlgorithmKind::Orrl | AlgorithmKind::Ucb => {
                    CoreEstimate::Omd(OmdState::new(spec.dim, params.eta, params.lambda)?)
                }
                AlgorithmKind::Baseline => CoreEstimate::Mle {
                    state: MleState::new(spec.dim, params.lambda)?,
                    gram: GramMatrix::regularized(spec.dim, params.lambda)?,
                    kappa: params.kappa,
                    updates: 0,
                },
            });
        }
        Ok(Self {
            config,
            params,
            estimates,
            episode: 1,
            tables: None,
            monitor_elliptical: false,
            rng,
        })
    }

    fn slot(&self, h: usize) -> usize {
        if self.config.share_horizons {
            0
        } else {
            h
        }
    }

    /// Scalar sweep inputs for the current episode.
    pub fn sweep_params(&self, spec: &MnlMdpSpec) -> SweepParams {
        let k = self.episode;
        match self.config.kind {
            AlgorithmKind::Rrl => {
                let (sigma, m) = schedule_rrl(k, spec, &self.params);
                SweepParams {
                    kind: AlgorithmKind::Rrl,
                    num_samples: m,
                    sigma,
                    beta: 0.0,
                    ucb_width: 0.0,
                }
            }
            AlgorithmKind::Orrl => {
                let sched = schedule_orrl(k, spec, &self.params);
                SweepParams {
                    kind: AlgorithmKind::Orrl,
                    num_samples: sched.num_samples,
                    sigma: sched.sigma,
                    beta: sched.beta,
                    ucb_width: 0.0,
                }
            }
            AlgorithmKind::Ucb => {
                let sched = schedule_orrl(k, spec, &self.params);
                SweepParams {
                    kind: AlgorithmKind::Ucb,
                    num_samples: 1,
                    sigma: 0.0,
                    beta: sched.beta,
                    ucb_width: 0.0,
                }
            }
            AlgorithmKind::Baseline => {
                let alpha = alpha_radius(
                    k,
                    self.params.delta,
                    spec.dim,
                    self.params.kappa,
                    self.params.lambda,
                    spec.max_reachable(),
                    spec.l_phi,
                    spec.l_theta,
                );
                SweepParams {
                    kind: AlgorithmKind::Baseline,
                    num_samples: 1,
                    sigma: 0.0,
                    beta: 0.0,
                    ucb_width: self.params.c_beta * spec.horizon as f64 * alpha,
                }
            }
        }
    }

    /// Play one episode: rebuild the value tables, act greedily for `H`
    /// steps against the true kernel, and fold every observed transition
    /// into the estimator. The baseline additionally refits its full
    /// likelihood once at the end of the episode.
    pub fn run_episode(
        &mut self,
        spec: &MnlMdpSpec,
        env_rng: &mut ChaCha20Rng,
    ) -> Result<EpisodeRecord> {
        use rand::RngExt;
        let params = self.sweep_params(spec);
        let mut agent_time = Duration::ZERO;

        let started = Instant::now();
        let tables = {
            let shared = self.config.share_horizons;
            let estimates = &self.estimates;
            let refs: Vec<&CoreEstimate> = (0..spec.horizon)
                .map(|h| &estimates[if shared { 0 } else { h }])
                .collect();
            planner::build_value_tables(spec, &refs, &params, &mut self.rng)?
        };
        agent_time += started.elapsed();

        let mut s: State = 0;
        let mut states = vec![s];
        let mut actions = Vec::with_capacity(spec.horizon);
        let mut rewards = Vec::with_capacity(spec.horizon);
        let mut responses = Vec::with_capacity(spec.horizon);
        let mut elliptical = self.monitor_elliptical.then(Vec::new);

        for h in 0..spec.horizon {
            let a = tables.greedy_action(h, s);
            let slot = self.slot(h);

            if let Some(terms) = elliptical.as_mut() {
                let gram = self.estimates[slot].gram();
                let width = spec
                    .features(s, a)
                    .iter()
                    .map(|phi| gram.inv_quad_feature(phi))
                    .fold(0.0f64, f64::max);
                terms.push(width);
            }

            let dist = model::transition_probs(spec, &spec.true_cores[h], s, a)?;
            let j = dist.sample_index(env_rng.random());
            let s_next = dist.support[j];

            let started = Instant::now();
            match &mut self.estimates[slot] {
                CoreEstimate::Ons(est) => est.update(spec, s, a, s_next)?,
                CoreEstimate::Omd(est) => est.update(spec, s, a, s_next)?,
                CoreEstimate::Mle {
                    state,
                    gram,
                    kappa,
                    updates,
                } => {
                    state.push(s, a, s_next);
                    let half = *kappa / 2.0;
                    gram.update(|m| {
                        for phi in spec.features(s, a) {
                            phi.add_outer_into(m, half);
                        }
                    })?;
                    *updates += 1;
                }
            }
            agent_time += started.elapsed();

            actions.push(a);
            rewards.push(spec.reward(s, a));
            responses.push(j);
            s = s_next;
            states.push(s);
        }

        if self.config.kind == AlgorithmKind::Baseline {
            let started = Instant::now();
            for est in &mut self.estimates {
                if let CoreEstimate::Mle { state, .. } = est {
                    state.refit(spec)?;
                }
            }
            agent_time += started.elapsed();
        }

        let value_at_start = tables.initial_value(states[0]);
        self.tables = Some(tables);
        self.episode += 1;
        Ok(EpisodeRecord {
            states,
            actions,
            rewards,
            responses,
            agent_seconds: agent_time.as_secs_f64(),
            value_at_start,
            elliptical_terms: elliptical,
        })
    }

    /// Concentration monitor: the worst ratio over horizon steps of the
    /// Gram-norm estimation error to the matching confidence radius at
    /// level `delta`. `None` for the baseline (its radius applies to the
    /// Newton-step iterate, not the full-likelihood fit).
    pub fn concentration_ratio(&self, spec: &MnlMdpSpec, delta: f64) -> Option<f64> {
        let mut worst: Option<f64> = None;
        for h in 0..spec.horizon {
            let est = &self.estimates[self.slot(h)];
            let diff = est.theta() - &spec.true_cores[h];
            let norm = est.gram().quad(&diff).max(0.0).sqrt();
            let radius = match est {
                CoreEstimate::Ons(state) => alpha_radius(
                    state.updates + 1,
                    delta,
                    spec.dim,
                    state.kappa,
                    state.lambda,
                    spec.max_reachable(),
                    spec.l_phi,
                    spec.l_theta,
                ),
                CoreEstimate::Omd(state) => beta_radius(
                    state.updates + 1,
                    delta,
                    spec.dim,
                    state.lambda,
                    spec.max_reachable(),
                    spec.l_theta,
                    spec.horizon,
                ),
                CoreEstimate::Mle { .. } => return None,
            };
            let ratio = norm / radius;
            worst = Some(worst.map_or(ratio, |w: f64| w.max(ratio)));
        }
        worst
    }
}

/// The right-hand side of the cumulative feature-width bound:
/// `(4 / kappa) * d * log(1 + K u l_phi^2 / (d lambda))`.
pub fn elliptical_bound(
    episodes: usize,
    d: usize,
    kappa: f64,
    lambda: f64,
    max_reachable: usize,
    l_phi: f64,
) -> f64 {
    let d_f = d as f64;
    4.0 / kappa
        * d_f
        * (1.0 + episodes as f64 * max_reachable as f64 * l_phi * l_phi / (d_f * lambda)).ln()
}
