//! One function per subcommand. Each fills a [`Summary`] and writes it to
//! the output directory before reporting success or failure.

use std::fs;
use std::path::Path;

use log::info;
use sspolicy::oracle::{build_chain, compare, solve_average_reward, ComparisonReport};
use sspolicy::policy::{
    build_value_function, evaluate_upper_bound, write_curves_csv, VerificationOptions, VerificationTolerances,
};
use sspolicy::sim::{simulate, write_trajectory};
use sspolicy::solver::{ode_residual, price_profile, solve_given_band, solve_optimal};
use sspolicy::{ModelParams, Policy, PriceBranch, ProfitEstimate, WSolution};

use crate::config::RunConfig;
use crate::output::{self, show, PolicyFile, Summary, CURVES_FILE, TRAJECTORY_FILE};
use crate::{CliError, Command};

/// Runs a subcommand on a validated configuration.
pub fn dispatch(command: &Command, config: &RunConfig, params: &ModelParams, dump_trajectory: bool) -> Result<(), CliError> {
    let dir = &config.output.dir;
    fs::create_dir_all(dir)?;
    let mut summary = Summary::default();
    let outcome = match command {
        Command::Solve => solve(params, config, &mut summary).map(|_| ()),
        Command::Evaluate { reorder_level, order_up_to } => {
            evaluate(params, config, *reorder_level, *order_up_to, &mut summary)
        }
        Command::Simulate { policy } => simulate_stored(params, config, policy, dump_trajectory, &mut summary),
        Command::Oracle => solve(params, config, &mut summary).and_then(|sol| oracle(params, config, &sol, &mut summary)),
        Command::Verify => solve(params, config, &mut summary).and_then(|sol| verify(params, &sol, &mut summary)),
        Command::Report => report(params, config, dump_trajectory, &mut summary),
    };
    // a failed check still leaves its numbers on disk
    if outcome.is_ok() || matches!(outcome, Err(CliError::Verification(_))) {
        let path = summary.write(dir)?;
        info!("wrote {}", path.display());
    }
    outcome
}

fn fill_solution(summary: &mut Summary, params: &ModelParams, sol: &WSolution, breakpoints: Vec<f64>) {
    summary.gamma = Some(sol.gamma);
    summary.s = Some(sol.reorder_level);
    summary.order_up_to = Some(sol.order_up_to);
    summary.z_star = Some(sol.turnover_level);
    summary.residual_max = Some(sol.residual_max());
    summary.z_max_used = Some(sol.z_max_used);
    summary.breakpoints = breakpoints;
    summary.check_num("solve.pasting_error", sol.pasting_error);
    summary.check_num("solve.area_error", (sol.area - params.fixed_cost).abs());
}

/// Solves, writes curves and the policy file, and fills the solution fields.
fn solve(params: &ModelParams, config: &RunConfig, summary: &mut Summary) -> Result<WSolution, CliError> {
    let sol = solve_optimal(params, &config.solver_options())?;
    let profile = price_profile(params, &sol, config.solver.profile_points);
    fill_solution(summary, params, &sol, profile.breakpoints.clone());
    summary.check("solve.price_segments", profile.segments.len());
    eprintln!(
        "solved: gamma = {}, s = {}, S = {}, z* = {}",
        show(sol.gamma),
        show(sol.reorder_level),
        show(sol.order_up_to),
        show(sol.turnover_level)
    );

    let dir = &config.output.dir;
    let vf = build_value_function(params, &sol);
    let policy = Policy::from_solution(params, &sol);
    let mut out = output::create(dir, CURVES_FILE)?;
    write_curves_csv(&mut out, &vf, &policy)?;
    output::finish(out)?;
    PolicyFile { s: sol.reorder_level, order_up_to: sol.order_up_to, curve: Some(CURVES_FILE.into()), constant_price: None }
        .write(dir)?;
    Ok(sol)
}

fn evaluate(params: &ModelParams, config: &RunConfig, s: f64, big_s: f64, summary: &mut Summary) -> Result<(), CliError> {
    let (gamma, fragment) = solve_given_band(params, s, big_s, &config.solver_options())?;
    let peak = fragment
        .z
        .iter()
        .zip(&fragment.w)
        .filter(|(&z, _)| z >= s && z <= big_s)
        .fold((f64::NAN, f64::NEG_INFINITY), |best, (&z, &w)| if w > best.1 { (z, w) } else { best });
    summary.gamma = Some(gamma);
    summary.s = Some(s);
    summary.order_up_to = Some(big_s);
    summary.z_star = Some(peak.0);
    summary.residual_max = Some(ode_residual(params, &fragment).max_abs);
    summary.z_max_used = Some(fragment.z_max());
    eprintln!("band ({}, {}): gamma = {}", show(s), show(big_s), show(gamma));
    Ok(())
}

fn run_simulation(
    params: &ModelParams,
    config: &RunConfig,
    policy: &Policy,
    dump_trajectory: bool,
    summary: &mut Summary,
) -> Result<ProfitEstimate, CliError> {
    let cfg = config.sim_config(Some(policy.order_up_to()));
    let result = simulate(params, policy, &cfg)?;
    let estimate = result.estimate();
    summary.check_num("sim.mean", estimate.mean);
    summary.check_num("sim.stderr", estimate.stderr);
    summary.check_num("sim.ci95_lo", estimate.ci95.0);
    summary.check_num("sim.ci95_hi", estimate.ci95.1);
    summary.check_num("sim.revenue_rate", result.revenue_rate);
    summary.check_num("sim.holding_rate", result.holding_rate);
    summary.check_num("sim.ordering_rate", result.ordering_rate);
    summary.check_num("sim.order_count_rate", result.order_count_rate);
    summary.check_num("sim.max_post_order_error", result.max_post_order_error);
    summary.check("sim.clamped_price_queries", result.clamped_price_queries);
    summary.check("sim.seed", cfg.seed);
    summary.check("sim.replications", cfg.replications);
    eprintln!("simulated: mean = {} (stderr {})", show(estimate.mean), show(estimate.stderr));
    if dump_trajectory {
        let mut out = output::create(&config.output.dir, TRAJECTORY_FILE)?;
        write_trajectory(params, policy, &cfg, 0, config.sim.trajectory_every, &mut out)?;
        output::finish(out)?;
    }
    Ok(estimate)
}

fn simulate_stored(
    params: &ModelParams,
    config: &RunConfig,
    path: &Path,
    dump_trajectory: bool,
    summary: &mut Summary,
) -> Result<(), CliError> {
    let policy = PolicyFile::load(path, &params.demand)?;
    summary.s = Some(policy.reorder_level());
    summary.order_up_to = Some(policy.order_up_to());
    run_simulation(params, config, &policy, dump_trajectory, summary).map(|_| ())
}

/// Oracle agreement: relative profit gap, band within two cells and, when
/// the optimal price peaks strictly inside the price range, peak location
/// within three cells.
fn oracle(params: &ModelParams, config: &RunConfig, sol: &WSolution, summary: &mut Summary) -> Result<(), CliError> {
    let chain = build_chain(params, &config.chain_spec(params))?;
    let oracle = solve_average_reward(&chain, config.oracle.tol, config.oracle.max_iterations)?;
    let report = compare(params, sol, &oracle);
    let delta = config.oracle.delta;
    summary.check_num("oracle.gamma", oracle.gamma);
    summary.check_num("oracle.s", oracle.reorder_level);
    summary.check_num("oracle.S", oracle.order_up_to);
    summary.check_num("oracle.peak_price_level", oracle.peak_price_level);
    summary.check("oracle.iterations", oracle.iterations);
    summary.check_num("oracle.span", oracle.span);
    fill_comparison(summary, &report);

    let peak_is_interior = sol
        .fragment
        .value(sol.turnover_level)
        .is_ok_and(|w| params.demand.branch(w) == PriceBranch::Interior);
    let mut failures = Vec::new();
    if !(report.gamma_rel_diff <= config.oracle.gamma_rel_tol) {
        failures.push(format!("relative profit gap {} > {}", show(report.gamma_rel_diff), show(config.oracle.gamma_rel_tol)));
    }
    if !(report.reorder_diff <= 2.0 * delta && report.order_up_to_diff <= 2.0 * delta) {
        failures.push(format!("band differs by ({}, {}) > 2 delta", show(report.reorder_diff), show(report.order_up_to_diff)));
    }
    if peak_is_interior && !(report.peak_diff <= 3.0 * delta) {
        failures.push(format!("price peak differs by {} > 3 delta", show(report.peak_diff)));
    }
    summary.check("oracle.peak_checked", peak_is_interior);
    summary.check("oracle.agrees", failures.is_empty());
    eprintln!("oracle: gamma = {} (relative gap {})", show(oracle.gamma), show(report.gamma_rel_diff));
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verification(format!("oracle disagreement: {}", failures.join("; "))))
    }
}

fn fill_comparison(summary: &mut Summary, report: &ComparisonReport) {
    summary.check_num("oracle.gamma_rel_diff", report.gamma_rel_diff);
    summary.check_num("oracle.s_diff", report.reorder_diff);
    summary.check_num("oracle.S_diff", report.order_up_to_diff);
    summary.check_num("oracle.peak_diff", report.peak_diff);
    summary.check_num("oracle.price_sup_diff", report.price_sup_diff);
    summary.check_num("oracle.boundary_mass", report.boundary_mass);
    summary.check("oracle.order_region_is_down_set", report.order_region_is_down_set);
}

fn verify(params: &ModelParams, sol: &WSolution, summary: &mut Summary) -> Result<(), CliError> {
    let vf = build_value_function(params, sol);
    let report = evaluate_upper_bound(params, &vf, sol.gamma, &VerificationOptions::default());
    summary.check_num("verify.generator_max", report.generator_max);
    summary.check_num("verify.generator_abs_max_above", report.generator_abs_max_above);
    summary.check_num("verify.below_reorder_max", report.below_reorder_max);
    summary.check_num("verify.slope_excess_max", report.slope_excess_max);
    summary.check_num("verify.growth_exponent", report.growth_exponent);
    summary.check_num("verify.growth_bound", report.growth_bound);
    summary.check_num("verify.impulse_max", report.impulse_max);
    summary.check("verify.skipped_levels", report.skipped_levels);
    let outcome = report.check(&VerificationTolerances::default());
    summary.check("verify.passed", outcome.is_ok());
    eprintln!("verification: generator max = {}", show(report.generator_max));
    Ok(outcome?)
}

/// Re-solves with the setup cost doubled and records the moved band.
/// No direction is asserted.
fn statics(params: &ModelParams, config: &RunConfig, summary: &mut Summary) -> Result<(), CliError> {
    let doubled = ModelParams::new(
        params.demand.clone(),
        params.cost.clone(),
        params.sigma,
        2.0 * params.fixed_cost,
        params.unit_cost,
    )?;
    let sol = solve_optimal(&doubled, &config.solver_options())?;
    summary.check_num("statics.fixed_cost_doubled.gamma", sol.gamma);
    summary.check_num("statics.fixed_cost_doubled.s", sol.reorder_level);
    summary.check_num("statics.fixed_cost_doubled.S", sol.order_up_to);
    summary.check_num("statics.fixed_cost_doubled.z_star", sol.turnover_level);
    Ok(())
}

/// Solve, verify, evaluate the solved band, run the oracle and simulate.
/// Every stage runs; the first failure is reported at the end.
fn report(params: &ModelParams, config: &RunConfig, dump_trajectory: bool, summary: &mut Summary) -> Result<(), CliError> {
    let sol = solve(params, config, summary)?;
    let mut failures = Vec::new();
    if let Err(e) = verify(params, &sol, summary) {
        failures.push(e);
    }

    let (band_gamma, _) = solve_given_band(params, sol.reorder_level, sol.order_up_to, &config.solver_options())?;
    summary.check_num("evaluate.gamma", band_gamma);
    summary.check_num("evaluate.gamma_diff", (band_gamma - sol.gamma).abs());

    if let Err(e) = oracle(params, config, &sol, summary) {
        failures.push(e);
    }

    statics(params, config, summary)?;

    let policy = Policy::from_solution(params, &sol);
    let estimate = run_simulation(params, config, &policy, dump_trajectory, summary)?;
    let covered = estimate.contains(sol.gamma);
    summary.check("sim.ci_contains_gamma", covered);
    if !covered {
        failures.push(CliError::Verification(format!(
            "simulated 95% interval ({}, {}) misses gamma = {}",
            show(estimate.ci95.0),
            show(estimate.ci95.1),
            show(sol.gamma)
        )));
    }
    match failures.into_iter().next() {
        None => Ok(()),
        Some(e) => Err(e),
    }
}
