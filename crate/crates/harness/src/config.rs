//! Experiment configuration: a JSON document naming the environment, the
//! agent configurations to run, the episode/seed grid, and output options.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mnl_mdp::agents::AgentConfig;
use mnl_mdp::envs;
use mnl_mdp::MnlMdpSpec;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum EnvironmentConfig {
    /// The chain benchmark with `n` states.
    Riverswim { n: usize, horizon: usize },
    /// A randomly generated instance (fixed by its own seed).
    Random {
        num_states: usize,
        num_actions: usize,
        dim: usize,
        max_reachable: usize,
        horizon: usize,
        l_theta: f64,
        seed: u64,
    },
    /// A full definition loaded from disk.
    File { path: PathBuf },
}

impl EnvironmentConfig {
    pub fn build(&self) -> Result<MnlMdpSpec> {
        match self {
            EnvironmentConfig::Riverswim { n, horizon } => {
                Ok(envs::build_riverswim(*n, *horizon)?)
            }
            EnvironmentConfig::Random {
                num_states,
                num_actions,
                dim,
                max_reachable,
                horizon,
                l_theta,
                seed,
            } => {
                let mut rng = ChaCha20Rng::seed_from_u64(*seed);
                Ok(envs::random_mnl_mdp(
                    *num_states,
                    *num_actions,
                    *dim,
                    *max_reachable,
                    *horizon,
                    *l_theta,
                    &mut rng,
                )?)
            }
            EnvironmentConfig::File { path } => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading environment file {}", path.display()))?;
                Ok(MnlMdpSpec::from_json(&text)?)
            }
        }
    }
}

/// One agent to run, with a label used in file names and the aggregate.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AlgorithmEntry {
    pub label: String,
    #[serde(flatten)]
    pub agent: AgentConfig,
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
pub struct MonitorFlags {
    #[serde(default)]
    pub concentration: bool,
    #[serde(default)]
    pub optimism: bool,
    #[serde(default)]
    pub elliptical_potential: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub environment: EnvironmentConfig,
    pub algorithms: Vec<AlgorithmEntry>,
    pub episodes: usize,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub monitors: MonitorFlags,
    /// When false, recorded wall times are zeroed so outputs are bitwise
    /// reproducible.
    #[serde(default)]
    pub timing: bool,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config: ExperimentConfig =
            serde_json::from_str(&text).context("malformed experiment config")?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            bail!("episodes must be at least 1");
        }
        if self.seeds.is_empty() {
            bail!("at least one seed is required");
        }
        if self.algorithms.is_empty() {
            bail!("at least one algorithm is required");
        }
        let mut labels: Vec<&str> = self.algorithms.iter().map(|a| a.label.as_str()).collect();
        labels.sort_unstable();
        labels.dedup();
        if labels.len() != self.algorithms.len() {
            bail!("algorithm labels must be distinct");
        }
        for entry in &self.algorithms {
            if entry.label.is_empty()
                || !entry
                    .label
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '+')
            {
                bail!(
                    "label {:?} must be nonempty and use only [A-Za-z0-9-_+]",
                    entry.label
                );
            }
            entry.agent.validate()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use mnl_mdp::planner::AlgorithmKind;

    fn minimal() -> ExperimentConfig {
        ExperimentConfig {
            environment: EnvironmentConfig::Riverswim { n: 4, horizon: 6 },
            algorithms: vec![AlgorithmEntry {
                label: "rrl".into(),
                agent: AgentConfig::new(AlgorithmKind::Rrl),
            }],
            episodes: 3,
            seeds: vec![0],
            output_dir: "out".into(),
            monitors: MonitorFlags::default(),
            timing: false,
        }
    }

    #[test]
    fn accepts_a_minimal_config() {
        minimal().validate().unwrap();
    }

    #[test]
    fn rejects_duplicate_labels() {
        let mut config = minimal();
        config.algorithms.push(config.algorithms[0].clone());
        assert!(config.validate().is_err());
    }

    #[test]
    fn rejects_empty_seed_list() {
        let mut config = minimal();
        config.seeds.clear();
        assert!(config.validate().is_err());
    }

    #[test]
    fn config_json_round_trips() {
        let config = minimal();
        let text = serde_json::to_string_pretty(&config).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        back.validate().unwrap();
        assert_eq!(back.episodes, config.episodes);
    }
}
