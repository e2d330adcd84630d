mod common;

use common::{default_fixture, hyperbolic_fixture};
use sspolicy::oracle::{build_chain, compare, solve_average_reward, ChainSpec};
use sspolicy::solver::solve_optimal;
use sspolicy::SolverOptions;

#[test]
fn default_fixture_agrees_with_chain_oracle() {
    let params = default_fixture();
    let sol = solve_optimal(&params, &SolverOptions::default()).unwrap();
    let delta = 0.05;
    let chain = build_chain(&params, &ChainSpec::uniform(&params, -8.0, 20.0, delta, 81)).unwrap();
    let oracle = solve_average_reward(&chain, 1e-9, 1_000_000).unwrap();
    let report = compare(&params, &sol, &oracle);

    assert!(report.gamma_rel_diff <= 0.02, "{report:?}");
    assert!(report.reorder_diff <= 2.0 * delta, "{report:?}");
    assert!(report.order_up_to_diff <= 2.0 * delta, "{report:?}");
    assert!(report.peak_diff <= 3.0 * delta, "{report:?}");
    assert!(oracle.peak_price_level <= 0.0);
    assert!(report.boundary_mass < 1e-3);
    assert!(report.order_region_is_down_set);
    // every ordering state jumps to the same level
    let targets: Vec<f64> = oracle.target.iter().flatten().copied().collect();
    assert!(targets.iter().all(|&t| t == oracle.order_up_to));
}

#[test]
fn refining_the_chain_shrinks_the_gap() {
    let params = default_fixture();
    let sol = solve_optimal(&params, &SolverOptions::default()).unwrap();
    let gap = |delta: f64| {
        let chain = build_chain(&params, &ChainSpec::uniform(&params, -8.0, 20.0, delta, 81)).unwrap();
        let oracle = solve_average_reward(&chain, 1e-9, 2_000_000).unwrap();
        compare(&params, &sol, &oracle).gamma_abs_diff
    };
    let coarse = gap(0.05);
    let fine = gap(0.025);
    assert!(fine < coarse, "{fine} vs {coarse}");
}

#[test]
fn hyperbolic_fixture_agrees_with_chain_oracle() {
    let params = hyperbolic_fixture();
    let sol = solve_optimal(&params, &SolverOptions::default()).unwrap();
    let mut gaps = Vec::new();
    for delta in [0.05, 0.025] {
        let chain = build_chain(&params, &ChainSpec::uniform(&params, -8.0, 12.0, delta, 81)).unwrap();
        let oracle = solve_average_reward(&chain, 1e-9, 4_000_000).unwrap();
        let report = compare(&params, &sol, &oracle);
        assert!(report.reorder_diff <= 2.0 * delta, "{delta}: {report:?}");
        assert!(report.order_up_to_diff <= 2.0 * delta, "{delta}: {report:?}");
        assert!(report.order_region_is_down_set);
        assert!(report.boundary_mass < 1e-6);
        gaps.push(report.gamma_abs_diff);
    }
    // the chain's profit converges at first order in the mesh
    assert!(gaps[0] < 0.06 * sol.gamma, "{gaps:?}");
    assert!(gaps[1] < 0.6 * gaps[0], "{gaps:?}");
}
