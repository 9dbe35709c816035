use mnl_mdp::agents::{AgentConfig, AgentState};
use mnl_mdp::envs;
use mnl_mdp::model;
use mnl_mdp::oracle;
use mnl_mdp::planner::AlgorithmKind;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn main() {
    let spec = envs::build_riverswim(4, 12).unwrap();
    let sol = oracle::exact_value_iteration(&spec).unwrap();
    let config = AgentConfig {
        kappa: Some(0.05),
        lambda: 1.0,
        m_override: Some(4),
        sigma_scale: 0.005,
        share_horizons: false,
        ..AgentConfig::new(AlgorithmKind::Rrl)
    };
    let mut agent_rng = ChaCha20Rng::seed_from_u64(0);
    agent_rng.set_stream(0);
    let mut env_rng = ChaCha20Rng::seed_from_u64(0);
    env_rng.set_stream(1);
    let mut agent = AgentState::new(&spec, config, agent_rng).unwrap();
    let mut visits = vec![0usize; 8];
    for k in 1..=3000usize {
        let rec = agent.run_episode(&spec, &mut env_rng).unwrap();
        for (s, a) in rec.states.iter().zip(&rec.actions) {
            visits[s * 2 + a] += 1;
        }
        if [1, 10, 100, 500, 1000, 3000].contains(&k) {
            let tables = agent.tables.as_ref().unwrap();
            let p = agent.sweep_params(&spec);
            let est = &agent.estimates[0];
            let dist = model::transition_probs(&spec, est.theta(), 1, 1).unwrap();
            println!(
                "k={k}: sigma_k={:.2} q[0][s0]={:?} q[0][s1]={:?} v1={:.2} (V*={:.2}) P_hat(1,R)={:?} visits={visits:?}",
                p.sigma,
                tables.q[0][0].iter().map(|x| (x * 100.0).round() / 100.0).collect::<Vec<_>>(),
                tables.q[0][1].iter().map(|x| (x * 100.0).round() / 100.0).collect::<Vec<_>>(),
                rec.value_at_start,
                sol.v_star[0][0],
                dist.probs.iter().map(|x| (x * 100.0).round() / 100.0).collect::<Vec<_>>(),
            );
        }
    }
}
