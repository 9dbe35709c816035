//! Ground-truth computations used by tests and metrics: exact dynamic
//! programming under the true kernel, finite-difference derivative checks,
//! and Monte Carlo optimism-rate estimation.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::agents::{AgentConfig, AgentState};
use crate::envs::TabularKernel;
use crate::model;
use crate::spec::{Action, MnlMdpSpec, State};
use crate::Result;

/// Exact value functions and an optimal policy under the true kernel.
#[derive(Clone, Debug)]
pub struct OracleSolution {
    /// `v_star[h][s]` for h in 0..=H; the terminal layer is zero.
    pub v_star: Vec<Vec<f64>>,
    /// `q_star[h][s][a]` for h in 0..H.
    pub q_star: Vec<Vec<Vec<f64>>>,
    /// Lowest-index optimal action per (h, s).
    pub optimal_policy: Vec<Vec<Action>>,
}

/// Backward induction under the true transition cores.
pub fn exact_value_iteration(spec: &MnlMdpSpec) -> Result<OracleSolution> {
    let horizon = spec.horizon;
    let mut v_star = vec![vec![0.0; spec.num_states]; horizon + 1];
    let mut q_star = vec![vec![vec![0.0; spec.num_actions]; spec.num_states]; horizon];
    let mut policy = vec![vec![0; spec.num_states]; horizon];
    for h in (0..horizon).rev() {
        for s in 0..spec.num_states {
            let mut best = f64::NEG_INFINITY;
            let mut best_a = 0;
            for a in 0..spec.num_actions {
                let dist = model::transition_probs(spec, &spec.true_cores[h], s, a)?;
                let mut value = spec.reward(s, a);
                for (j, &succ) in dist.support.iter().enumerate() {
                    value += dist.probs[j] * v_star[h + 1][succ];
                }
                q_star[h][s][a] = value;
                if value > best {
                    best = value;
                    best_a = a;
                }
            }
            v_star[h][s] = best;
            policy[h][s] = best_a;
        }
    }
    Ok(OracleSolution {
        v_star,
        q_star,
        optimal_policy: policy,
    })
}

/// Independent cross-check: the same backward induction written directly
/// against a tabular kernel, bypassing the softmax model entirely.
pub fn exact_value_iteration_tabular(
    kernel: &TabularKernel,
    rewards: &dyn Fn(State, Action) -> f64,
) -> OracleSolution {
    let horizon = kernel.horizon;
    let mut v_star = vec![vec![0.0; kernel.num_states]; horizon + 1];
    let mut q_star = vec![vec![vec![0.0; kernel.num_actions]; kernel.num_states]; horizon];
    let mut policy = vec![vec![0; kernel.num_states]; horizon];
    for h in (0..horizon).rev() {
        for s in 0..kernel.num_states {
            for a in 0..kernel.num_actions {
                let sa = s * kernel.num_actions + a;
                let mut value = rewards(s, a);
                for (j, &succ) in kernel.supports[sa].iter().enumerate() {
                    value += kernel.probs[h][sa][j] * v_star[h + 1][succ];
                }
                q_star[h][s][a] = value;
            }
            let row = &q_star[h][s];
            let mut best_a = 0;
            for a in 1..kernel.num_actions {
                if row[a] > row[best_a] {
                    best_a = a;
                }
            }
            v_star[h][s] = row[best_a];
            policy[h][s] = best_a;
        }
    }
    OracleSolution {
        v_star,
        q_star,
        optimal_policy: policy,
    }
}

/// Exact value of a deterministic Markov policy under the true kernel,
/// returned as `v_pi[h][s]`.
pub fn evaluate_policy(spec: &MnlMdpSpec, policy: &[Vec<Action>]) -> Result<Vec<Vec<f64>>> {
    let horizon = spec.horizon;
    let mut v = vec![vec![0.0; spec.num_states]; horizon + 1];
    for h in (0..horizon).rev() {
        for s in 0..spec.num_states {
            let a = policy[h][s];
            let dist = model::transition_probs(spec, &spec.true_cores[h], s, a)?;
            let mut value = spec.reward(s, a);
            for (j, &succ) in dist.support.iter().enumerate() {
                value += dist.probs[j] * v[h + 1][succ];
            }
            v[h][s] = value;
        }
    }
    Ok(v)
}

/// Outcome of a central finite-difference comparison.
#[derive(Clone, Debug)]
pub struct FiniteDiffReport {
    pub max_rel_err: f64,
    pub pass: bool,
}

/// Relative error with a unit floor, so near-zero entries are compared
/// absolutely.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// Compare a claimed gradient field against central finite differences of a
/// scalar field at one point.
pub fn finite_diff_check<F, G>(
    point: &DVector<f64>,
    f: F,
    g: G,
    step: f64,
    tol: f64,
) -> FiniteDiffReport
where
    F: Fn(&DVector<f64>) -> f64,
    G: Fn(&DVector<f64>) -> DVector<f64>,
{
    let claimed = g(point);
    let mut max_rel_err: f64 = 0.0;
    let mut probe = point.clone();
    for i in 0..point.len() {
        probe[i] = point[i] + step;
        let up = f(&probe);
        probe[i] = point[i] - step;
        let down = f(&probe);
        probe[i] = point[i];
        let numeric = (up - down) / (2.0 * step);
        max_rel_err = max_rel_err.max(rel_err(numeric, claimed[i]));
    }
    FiniteDiffReport {
        max_rel_err,
        pass: max_rel_err < tol,
    }
}

/// Fraction of (episode, seed) pairs whose estimated initial value is at
/// least the optimal one. The environment stream and the agent's noise
/// stream are split off the same seed.
pub fn empirical_optimism_rate(
    spec: &MnlMdpSpec,
    config: &AgentConfig,
    episodes: usize,
    seeds: &[u64],
) -> Result<f64> {
    let oracle = exact_value_iteration(spec)?;
    let v_star = oracle.v_star[0][0];
    let mut optimistic = 0usize;
    let mut total = 0usize;
    for &seed in seeds {
        let mut agent_rng = ChaCha20Rng::seed_from_u64(seed);
        agent_rng.set_stream(0);
        let mut env_rng = ChaCha20Rng::seed_from_u64(seed);
        env_rng.set_stream(1);
        let mut agent = AgentState::new(spec, config.clone(), agent_rng)?;
        for _ in 0..episodes {
            let record = agent.run_episode(spec, &mut env_rng)?;
            total += 1;
            if record.value_at_start >= v_star {
                optimistic += 1;
            }
        }
    }
    Ok(optimistic as f64 / total as f64)
}
