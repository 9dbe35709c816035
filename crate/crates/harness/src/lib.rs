//! Experiment harness for the softmax-transition MDP agents: configuration,
//! seeded multi-run execution, metrics/regret/runtime collection, and
//! plot-data emission.

pub mod config;
pub mod metrics;
pub mod plot;
pub mod runner;

pub use config::{AlgorithmEntry, EnvironmentConfig, ExperimentConfig, MonitorFlags};
pub use runner::{measure_runtime, run_experiment, ExperimentReport, RuntimeSummary};
