use mnl_mdp::agents::{AgentConfig, AgentState};
use mnl_mdp::envs;
use mnl_mdp::oracle;
use mnl_mdp::planner::AlgorithmKind;
use mnl_mdp::stats::rolling_mean;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn run(spec: &mnl_mdp::MnlMdpSpec, config: &AgentConfig, episodes: usize, seed: u64) -> Vec<f64> {
    let mut agent_rng = ChaCha20Rng::seed_from_u64(seed);
    agent_rng.set_stream(0);
    let mut env_rng = ChaCha20Rng::seed_from_u64(seed);
    env_rng.set_stream(1);
    let mut agent = AgentState::new(spec, config.clone(), agent_rng).unwrap();
    (0..episodes)
        .map(|_| agent.run_episode(spec, &mut env_rng).unwrap().episodic_return())
        .collect()
}

fn main() {
    let spec = envs::build_riverswim(4, 12).unwrap();
    let sol = oracle::exact_value_iteration(&spec).unwrap();
    let v_star = sol.v_star[0][0];
    println!("V*_1(s1) = {v_star:.4}");
    let episodes: usize = std::env::args().nth(1).and_then(|x| x.parse().ok()).unwrap_or(10000);
    let kind_arg = std::env::args().nth(2).unwrap_or_else(|| "all".into());
    let scale_arg: Option<f64> = std::env::args().nth(3).and_then(|x| x.parse().ok());
    let kinds = [
        AlgorithmKind::Rrl,
        AlgorithmKind::Orrl,
        AlgorithmKind::Ucb,
        AlgorithmKind::Baseline,
    ];
    for kind in kinds {
        if kind_arg != "all" && kind_arg != kind.as_str() {
            continue;
        }
        let scales: Vec<f64> = match scale_arg {
            Some(s) => vec![s],
            None => vec![0.0002, 0.001],
        };
        for &scale in &scales {
            let t = std::time::Instant::now();
            let config = AgentConfig {
                kappa: Some(0.05),
                lambda: 1.0,
                m_override: Some(4),
                sigma_scale: if kind == AlgorithmKind::Rrl { scale } else { 1.0 },
                c_beta: if kind == AlgorithmKind::Rrl { 1.0 } else { scale },
                share_horizons: false,
                ..AgentConfig::new(kind)
            };
            let spec0 = spec.clone();
            let c0 = config.clone();
            let handle =
                std::thread::spawn(move || run(&spec0, &c0, episodes, 0));
            let r1 = run(&spec, &config, episodes, 1);
            let r0 = handle.join().unwrap();
            let mut reach = Vec::new();
            let mut finals = Vec::new();
            for returns in [&r0, &r1] {
                let smooth = rolling_mean(returns, 500);
                let hit = smooth.iter().position(|&x| x >= 0.9 * v_star);
                reach.push(hit.map(|i| i as i64).unwrap_or(-1));
                let tail = &returns[returns.len().saturating_sub(500)..];
                finals.push(tail.iter().sum::<f64>() / tail.len() as f64);
            }
            println!(
                "{:>8} scale {:.3}: reach90 {:?} final {:?} ({:.0}s)",
                kind.as_str(),
                scale,
                reach,
                finals.iter().map(|x| (x * 100.0).round() / 100.0).collect::<Vec<_>>(),
                t.elapsed().as_secs_f64()
            );
        }
    }
}
