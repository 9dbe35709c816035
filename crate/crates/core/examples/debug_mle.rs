use mnl_mdp::agents::{AgentConfig, AgentState};
use mnl_mdp::envs;
use mnl_mdp::estimators::CoreEstimate;
use mnl_mdp::planner::AlgorithmKind;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn main() {
    let spec = envs::build_riverswim(4, 12).unwrap();
    let config = AgentConfig {
        kappa: Some(0.05),
        c_beta: 0.001,
        m_override: Some(4),
        ..AgentConfig::new(AlgorithmKind::Baseline)
    };
    let mut agent = AgentState::new(&spec, config, ChaCha20Rng::seed_from_u64(11)).unwrap();
    let mut env_rng = ChaCha20Rng::seed_from_u64(12);
    let mut iter_hist = [0usize; 6]; // buckets: 0-4, 5-9, 10-19, 20-49, 50-99, 100
    for k in 1..=1200usize {
        let rec = agent.run_episode(&spec, &mut env_rng).unwrap();
        // refit again standalone to count iterations per slot (cheap clone)
        if k % 400 == 0 {
            let mut iters = Vec::new();
            let mut norms = Vec::new();
            for est in &agent.estimates {
                if let CoreEstimate::Mle { state, .. } = est {
                    let mut c = state.clone();
                    iters.push(c.refit(&spec).unwrap());
                    norms.push((c.theta.norm() * 100.0).round() / 100.0);
                }
            }
            println!("k={k}: episode {:.2} ms iters {:?} |theta| {:?} (ball {:.2})",
                rec.agent_seconds * 1e3, iters, norms, spec.l_theta);
        }
        let _ = &mut iter_hist;
    }
}
