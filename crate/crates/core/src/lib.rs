//! Model-based reinforcement learning for episodic MDPs whose transition
//! kernel is a multinomial-logistic (softmax) function of state-action-successor
//! features.
//!
//! The crate provides:
//!
//! - [`spec`]: the environment definition ([`spec::MnlMdpSpec`]) — states,
//!   actions, horizon, reachable successor sets, features, rewards, and the
//!   true per-horizon transition cores used for simulation.
//! - [`model`]: the softmax transition model and its per-episode negative
//!   log-likelihood, gradient, and Hessian (centralized form).
//! - [`estimators`]: online transition-core estimation — a Newton-step style
//!   update on a global Gram matrix, an online-mirror-descent update on local
//!   curvature, and a full regularized-MLE baseline, plus the weighted-norm
//!   ball projection they share.
//! - [`planner`]: backward-induction value construction for the randomized
//!   and optimistic agents (perturbation sampling, dominant features, bonus
//!   terms).
//! - [`agents`]: episode-level loops and hyperparameter schedules.
//! - [`envs`]: the RiverSwim chain with an exactly-realizable one-hot
//!   embedding, and a random instance generator for property tests.
//! - [`oracle`]: exact dynamic programming under the true kernel,
//!   finite-difference derivative checks, and Monte Carlo optimism-rate
//!   estimation.
//! - [`stats`]: small statistical helpers (normal CDF, regression slope
//!   tests, binomial confidence bounds).

pub mod agents;
pub mod envs;
pub mod error;
pub mod estimators;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod planner;
pub mod spec;
pub mod stats;

pub use error::MnlError;
pub use spec::{FeatureVec, MnlMdpSpec, TransitionDist};

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, MnlError>;
