mod common;

use common::default_fixture;
use sspolicy::policy::Policy;
use sspolicy::sim::{estimate_profit, simulate, write_trajectory, SimConfig};
use sspolicy::solver::solve_optimal;
use sspolicy::{CostModel, DemandModel, ModelParams, SolverOptions};

/// Deterministic cycle: price 5 sells 5 units per unit time, so the level
/// runs from S = 3 down to s = −1 in 0.8 time units. Revenue 25, average
/// holding (1/4)∫_{−1}^{3} z² dz = 7/3, ordering (K + 4k)/0.8 = 6.25.
const CYCLE_PROFIT: f64 = 25.0 - 7.0 / 3.0 - 6.25;

fn near_deterministic() -> (ModelParams, Policy) {
    let params = ModelParams::new(
        DemandModel::linear(10.0, 2.0, 6.0).unwrap(),
        CostModel::quadratic(1.0, 1.0).unwrap(),
        0.01,
        1.0,
        1.0,
    )
    .unwrap();
    let policy = Policy::constant_price(-1.0, 3.0, 5.0, params.demand.clone()).unwrap();
    (params, policy)
}

#[test]
fn near_deterministic_cycle_matches_closed_form() {
    let (params, policy) = near_deterministic();
    let mut errors = Vec::new();
    for dt in [4e-3, 1e-3] {
        let cfg = SimConfig { horizon: 400.0, burn_in: 40.0, dt, replications: 4, ..SimConfig::default() };
        let r = simulate(&params, &policy, &cfg).unwrap();
        assert!((r.revenue_rate - 25.0).abs() < 1e-9);
        errors.push((r.avg_profit - CYCLE_PROFIT).abs());
    }
    assert!(errors[1] <= 0.01 * CYCLE_PROFIT, "{errors:?}");
    // overshoot bias shrinks with the step
    assert!(errors[1] < errors[0], "{errors:?}");
}

#[test]
fn same_seed_is_bit_identical() {
    let params = default_fixture();
    let policy = Policy::constant_price(-1.5, 1.5, 5.5, params.demand.clone()).unwrap();
    let cfg = SimConfig { horizon: 100.0, burn_in: 10.0, replications: 3, seed: 42, ..SimConfig::default() };
    let a = simulate(&params, &policy, &cfg).unwrap();
    let b = simulate(&params, &policy, &cfg).unwrap();
    assert_eq!(a, b);
    let c = simulate(&params, &policy, &SimConfig { seed: 43, ..cfg }).unwrap();
    assert_ne!(a.avg_profit, c.avg_profit);
}

#[test]
fn orders_restore_the_order_up_to_level() {
    let params = default_fixture();
    let sol = solve_optimal(&params, &SolverOptions::default()).unwrap();
    let policy = Policy::from_solution(&params, &sol);
    let dt = 1e-3;
    let cfg = SimConfig { horizon: 200.0, burn_in: 10.0, dt, replications: 2, ..SimConfig::default() };
    let r = simulate(&params, &policy, &cfg).unwrap();
    assert!(r.max_post_order_error <= 1e-12);
    // one step moves at most μ_max·dt plus a (generous) 6σ√dt shock
    let overshoot = 8.0 * dt + 6.0 * params.sigma * dt.sqrt();
    assert!(r.min_level_observed >= sol.reorder_level - overshoot, "{}", r.min_level_observed);
    assert!(r.order_count_rate > 0.0);
}

#[test]
fn revenue_noise_leaves_mean_unchanged() {
    let params = default_fixture();
    let sol = solve_optimal(&params, &SolverOptions::default()).unwrap();
    let policy = Policy::from_solution(&params, &sol);
    let cfg = SimConfig { horizon: 500.0, burn_in: 50.0, replications: 8, ..SimConfig::default() };
    let off = estimate_profit(&params, &policy, &cfg).unwrap();
    let on = estimate_profit(&params, &policy, &SimConfig { revenue_noise: true, ..cfg }).unwrap();
    assert!((on.mean - off.mean).abs() < 2.0 * on.stderr, "{on:?} vs {off:?}");
    assert!(on.stderr > off.stderr);
}

#[test]
fn baseline_policies_do_not_beat_the_optimum() {
    let params = default_fixture();
    let sol = solve_optimal(&params, &SolverOptions::default()).unwrap();
    let optimal = Policy::from_solution(&params, &sol);
    let cfg = SimConfig { horizon: 1000.0, burn_in: 100.0, replications: 8, ..SimConfig::default() };
    let candidates = [
        Policy::constant_price(sol.reorder_level, sol.order_up_to, 5.5, params.demand.clone()).unwrap(),
        optimal.with_band(sol.reorder_level + 0.25, sol.order_up_to - 0.25).unwrap(),
    ];
    for policy in &candidates {
        let est = estimate_profit(&params, policy, &cfg).unwrap();
        assert!(est.mean <= sol.gamma + 3.0 * est.stderr, "{est:?} vs {}", sol.gamma);
    }
}

#[test]
fn estimate_needs_two_replications() {
    let params = default_fixture();
    let policy = Policy::constant_price(-1.0, 1.0, 5.0, params.demand.clone()).unwrap();
    let cfg = SimConfig { replications: 1, horizon: 10.0, burn_in: 1.0, ..SimConfig::default() };
    assert!(estimate_profit(&params, &policy, &cfg).is_err());
}

#[test]
fn trajectory_dump_is_reproducible() {
    let params = default_fixture();
    let policy = Policy::constant_price(-1.0, 1.0, 5.0, params.demand.clone()).unwrap();
    let cfg = SimConfig { horizon: 5.0, burn_in: 0.0, replications: 1, ..SimConfig::default() };
    let mut a = Vec::new();
    let mut b = Vec::new();
    write_trajectory(&params, &policy, &cfg, 0, 100, &mut a).unwrap();
    write_trajectory(&params, &policy, &cfg, 0, 100, &mut b).unwrap();
    assert_eq!(a, b);
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 51);
}
