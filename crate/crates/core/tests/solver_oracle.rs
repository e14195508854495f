mod common;

use common::{dense_qp_oracle, random_arx, random_ss};
use iampc_core::mpc::{solve_arx_mpc, solve_ss_mpc, SolveStatus};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn arx_solver_matches_dense_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let problem = random_arx(&mut rng);
        let sol = solve_arx_mpc(&problem, None).unwrap();
        assert_ne!(sol.status, SolveStatus::IterationLimit);
        let oracle = dense_qp_oracle(&problem);
        let gap = (sol.objective - oracle.objective).abs();
        worst = worst.max(gap);
    }
    assert!(worst <= 1e-4, "worst objective gap {worst:e}");
}

#[test]
fn ss_solver_matches_dense_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let problem = random_ss(&mut rng);
        let sol = solve_ss_mpc(&problem, None).unwrap();
        assert_ne!(sol.status, SolveStatus::IterationLimit);
        let oracle = dense_qp_oracle(&problem);
        worst = worst.max((sol.objective - oracle.objective).abs());
    }
    assert!(worst <= 1e-4, "worst objective gap {worst:e}");
}
