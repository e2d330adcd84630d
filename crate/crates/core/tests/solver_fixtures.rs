mod common;

use common::{continuous_pricing_fixture, default_fixture, hyperbolic_fixture};
use proptest::prelude::*;
use sspolicy::solver::{first_difference_sign_changes, price_profile, solve_given_band, solve_optimal};
use sspolicy::{CostModel, DemandFamily, DemandModel, ModelParams, PriceBranch, SolverError, SolverOptions, WSolution};

fn assert_solution_invariants(params: &ModelParams, sol: &WSolution) {
    let k = params.unit_cost;
    assert!(sol.pasting_error <= 1e-6, "pasting error {}", sol.pasting_error);
    assert!((sol.area - params.fixed_cost).abs() <= 1e-6 * params.fixed_cost.max(1.0), "area {}", sol.area);
    assert!(sol.residual_max() <= 1e-8, "residual {:?}", sol.residual);
    assert!(sol.reorder_level < sol.turnover_level && sol.turnover_level < sol.order_up_to);
    assert!(sol.turnover_level <= 0.0);
    assert_eq!(first_difference_sign_changes(sol.w_values()), 1);
    assert!(sol.gamma < params.demand.max_revenue_rate());

    let w = sol.w_values();
    assert!(w[w.len() - 1] < k - 1.0);
    let z = sol.grid();
    for i in 1..z.len() {
        if z[i - 1] >= sol.turnover_level {
            assert!(w[i] < w[i - 1], "w not strictly decreasing at z = {}", z[i]);
        }
        if z[i] <= sol.turnover_level {
            assert!(w[i] > w[i - 1], "w not strictly increasing at z = {}", z[i]);
        }
    }
    let profile = price_profile(params, sol, 2001);
    assert!(profile.is_unimodal_about(sol.turnover_level, 1e-12));
}

#[test]
fn default_fixture_solution() {
    let params = default_fixture();
    let sol = solve_optimal(&params, &SolverOptions::default()).unwrap();
    assert_solution_invariants(&params, &sol);
    // κ = max p(10 − p) = 25
    assert!(sol.gamma < 25.0);
    assert!(!sol.diagnostics.fallback_used);
}

#[test]
fn truncation_is_certified() {
    let params = default_fixture();
    let sol = solve_optimal(&params, &SolverOptions::default()).unwrap();
    let history = &sol.diagnostics.truncation_history;
    let n = history.len();
    assert!(n >= 2);
    assert!((history[n - 1].1 - history[n - 2].1).abs() < 1e-8);
    assert_eq!(history[n - 1].0, sol.z_max_used);

    let fixed = SolverOptions { z_max: Some(20.0), ..SolverOptions::default() };
    let short = solve_optimal(&params, &fixed).unwrap();
    assert_eq!(short.z_max_used, 20.0);
    assert!((short.gamma - sol.gamma).abs() < 1e-6);
}

#[test]
fn hyperbolic_fixture_single_price_switch() {
    let params = hyperbolic_fixture();
    let sol = solve_optimal(&params, &SolverOptions::default()).unwrap();
    assert_solution_invariants(&params, &sol);

    let profile = price_profile(&params, &sol, 2001);
    assert_eq!(profile.breakpoints.len(), 1, "{:?}", profile.segments);
    let z_p = profile.breakpoints[0];
    assert!(z_p > sol.order_up_to);
    assert_eq!(profile.segments[0].branch, PriceBranch::Upper);
    assert_eq!(profile.segments[1].branch, PriceBranch::Lower);

    // w crosses −λ0 exactly once to the right of S*
    let lambda0 = match params.demand.family() {
        DemandFamily::Hyperbolic { lambda0, .. } => *lambda0,
        _ => unreachable!(),
    };
    let crossings = sol
        .grid()
        .windows(2)
        .zip(sol.w_values().windows(2))
        .filter(|(z, w)| z[0] >= sol.order_up_to && (w[0] + lambda0) * (w[1] + lambda0) < 0.0)
        .count()
        + sol.w_values().iter().filter(|&&w| w == -lambda0).count();
    assert_eq!(crossings, 1);
}

#[test]
fn continuous_pricing_regime_has_five_segments() {
    let params = continuous_pricing_fixture();
    let sol = solve_optimal(&params, &SolverOptions::default()).unwrap();
    assert_solution_invariants(&params, &sol);

    // regime conditions: w*(z*) > 2p̄ − A and k < 2p̲ − A
    let (a, p_min, p_max) = (7.0, 4.0, 6.0);
    let w_peak = sol.fragment.value(sol.turnover_level).unwrap();
    assert!(w_peak > 2.0 * p_max - a);
    assert!(params.unit_cost < 2.0 * p_min - a);

    let profile = price_profile(&params, &sol, 2001);
    let branches: Vec<_> = profile.segments.iter().map(|s| s.branch).collect();
    use PriceBranch::*;
    assert_eq!(branches, [Lower, Interior, Upper, Interior, Lower]);
    let b = &profile.breakpoints;
    let ordered = [sol.reorder_level, b[0], b[1], sol.turnover_level, b[2], b[3], sol.order_up_to];
    assert!(ordered.windows(2).all(|p| p[0] < p[1]), "{ordered:?}");
}

#[test]
fn given_band_matches_optimal_band() {
    let params = default_fixture();
    let opts = SolverOptions::default();
    let sol = solve_optimal(&params, &opts).unwrap();
    let (gamma, _) = solve_given_band(&params, sol.reorder_level, sol.order_up_to, &opts).unwrap();
    assert!((gamma - sol.gamma).abs() <= 1e-6, "{gamma} vs {}", sol.gamma);
}

#[test]
fn perturbed_bands_are_dominated() {
    let params = default_fixture();
    let opts = SolverOptions::default();
    let sol = solve_optimal(&params, &opts).unwrap();
    let (s, big_s) = (sol.reorder_level, sol.order_up_to);
    let mut bands = vec![(s - 0.5, big_s), (s, big_s + 0.5)];
    for ds in [-0.25, 0.0, 0.25] {
        for d_big in [-0.25, 0.0, 0.25] {
            if ds != 0.0 || d_big != 0.0 {
                bands.push((s + ds, big_s + d_big));
            }
        }
    }
    for (lo, hi) in bands {
        let (gamma, _) = solve_given_band(&params, lo, hi, &opts).unwrap();
        assert!(gamma <= sol.gamma + 1e-8, "band ({lo}, {hi}) gives {gamma} > {}", sol.gamma);
    }
}

#[test]
fn given_band_rejects_inverted_band() {
    let params = default_fixture();
    let err = solve_given_band(&params, 1.0, 0.5, &SolverOptions::default()).unwrap_err();
    assert!(matches!(err, SolverError::InvalidInput(_)));
}

#[test]
fn asymmetric_holding_cost() {
    let params = ModelParams::new(
        DemandModel::linear(10.0, 2.0, 6.0).unwrap(),
        CostModel::quadratic(1.0, 3.0).unwrap(),
        1.0,
        1.0,
        1.0,
    )
    .unwrap();
    let sol = solve_optimal(&params, &SolverOptions::default()).unwrap();
    assert_solution_invariants(&params, &sol);
    // dearer backlog pushes the band up relative to the symmetric case
    let symmetric = solve_optimal(&default_fixture(), &SolverOptions::default()).unwrap();
    assert!(sol.reorder_level > symmetric.reorder_level);
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 10, ..ProptestConfig::default() })]

    #[test]
    fn random_linear_models_satisfy_invariants(
        a in 8.0f64..12.0,
        sigma in 0.6f64..1.6,
        fixed in 0.5f64..3.0,
        unit in 0.3f64..1.5,
    ) {
        let params = ModelParams::new(
            DemandModel::linear(a, 2.0, 6.0).unwrap(),
            CostModel::quadratic(1.0, 1.0).unwrap(),
            sigma,
            fixed,
            unit,
        )
        .unwrap();
        let sol = solve_optimal(&params, &SolverOptions::default()).unwrap();
        assert_solution_invariants(&params, &sol);
    }
}
