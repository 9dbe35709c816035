use mnl_mdp::agents::{AgentConfig, AgentState};
use mnl_mdp::envs;
use mnl_mdp::planner::AlgorithmKind;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn main() {
    let spec = envs::build_riverswim(4, 12).unwrap();
    let share = std::env::args().any(|a| a == "--share");
    let episodes = 1000;
    let mut totals = Vec::new();
    for kind in [
        AlgorithmKind::Rrl,
        AlgorithmKind::Orrl,
        AlgorithmKind::Ucb,
        AlgorithmKind::Baseline,
    ] {
        let config = AgentConfig {
            kappa: Some(0.05),
            sigma_scale: 0.0002,
            c_beta: 0.001,
            m_override: Some(4),
            share_horizons: share,
            ..AgentConfig::new(kind)
        };
        let mut agent = AgentState::new(&spec, config, ChaCha20Rng::seed_from_u64(11)).unwrap();
        let mut env_rng = ChaCha20Rng::seed_from_u64(12);
        let mut total = 0.0;
        let mut quarters = [0.0f64; 4];
        let start = std::time::Instant::now();
        for k in 0..episodes {
            let r = agent.run_episode(&spec, &mut env_rng).unwrap();
            total += r.agent_seconds;
            quarters[k * 4 / episodes] += r.agent_seconds;
        }
        println!(
            "{:?} share={share}: total {:.3}s wall {:.3}s quarters {:?}",
            kind,
            total,
            start.elapsed().as_secs_f64(),
            quarters
        );
        totals.push(total);
    }
    let max_online = totals[0].max(totals[1]).max(totals[2]);
    println!("ratio baseline/max_online = {:.2}", totals[3] / max_online);
}
