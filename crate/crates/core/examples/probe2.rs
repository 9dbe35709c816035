use mnl_mdp::envs;
use mnl_mdp::estimators::{OmdState, OnsState};
use mnl_mdp::linalg::GramMatrix;
use mnl_mdp::model;
use mnl_mdp::planner::sample_perturbations;
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use std::time::Instant;

fn main() {
    let spec = envs::build_riverswim(4, 12).unwrap();
    let d = spec.dim;
    println!("d = {d}");
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let gram = GramMatrix::regularized(d, 1.0).unwrap();

    let t = Instant::now();
    let n = 20000;
    for _ in 0..n {
        let _ = sample_perturbations(&gram, 1.0, 4, &mut rng).unwrap();
    }
    println!("4 noise draws: {:.2} us", t.elapsed().as_secs_f64() / n as f64 * 1e6);

    let m = gram.matrix().clone();
    let t = Instant::now();
    for _ in 0..n {
        let _ = m.clone().symmetric_eigen();
    }
    println!("sym eigen: {:.2} us", t.elapsed().as_secs_f64() / n as f64 * 1e6);

    let t = Instant::now();
    for _ in 0..n {
        let _ = nalgebra::Cholesky::new(m.clone()).unwrap();
    }
    println!("cholesky: {:.2} us", t.elapsed().as_secs_f64() / n as f64 * 1e6);

    let t = Instant::now();
    let mut g2 = gram.clone();
    for _ in 0..n {
        g2.update(|mm| mm[(0, 0)] += 1e-9).unwrap();
    }
    println!("gram.update (chol+inv): {:.2} us", t.elapsed().as_secs_f64() / n as f64 * 1e6);

    let theta = spec.true_cores[0].clone();
    let t = Instant::now();
    for _ in 0..n {
        let _ = model::loss_hessian(&spec, &theta, 1, 1).unwrap();
    }
    println!("loss_hessian: {:.2} us", t.elapsed().as_secs_f64() / n as f64 * 1e6);

    // full estimator updates
    let mut ons = OnsState::new(d, 0.05, 1.0).unwrap();
    let t = Instant::now();
    for _ in 0..2000 {
        ons.update(&spec, 1, 1, 1).unwrap();
    }
    println!("ons.update: {:.2} us", t.elapsed().as_secs_f64() / 2000.0 * 1e6);

    let mut omd = OmdState::new(d, 5.5, 1.0).unwrap();
    let t = Instant::now();
    for _ in 0..2000 {
        omd.update(&spec, 1, 1, 1).unwrap();
    }
    println!("omd.update: {:.2} us", t.elapsed().as_secs_f64() / 2000.0 * 1e6);

    // projection when infeasible
    let z = DVector::from_element(d, 1.0);
    let t = Instant::now();
    for _ in 0..n {
        let _ = mnl_mdp::estimators::project_weighted_ball(&z, gram.matrix(), 1.0).unwrap();
    }
    println!("projection (infeasible): {:.2} us", t.elapsed().as_secs_f64() / n as f64 * 1e6);
}
