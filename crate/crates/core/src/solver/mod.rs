//! Free-boundary solver for the optimal `(s, S)` band and pricing rule.
//!
//! The marginal value `w = V'` solves
//!
//! ```text
//! (σ²/2)·w'(z) + π(w(z)) − h(z) = γ
//! w(s) = w(S) = k,   ∫_s^S (w − k) dz = K,   w'(z)/h(z) → 0 as z → ∞
//! ```
//!
//! For a trial `γ` the ODE is shot backward from a truncation level `z_max`
//! started on the asymptotic balance `π(w) = h(z_max) + γ`. The band
//! `[s, S]` is where the shot crosses `k`, and `γ` is adjusted until the
//! band area equals `K`. Truncation is certified by doubling `z_max` until
//! `γ` stops moving.

mod band;
mod integrate;
mod profile;

use log::{debug, warn};
use thiserror::Error;

use crate::cost::CostModel;
use crate::demand::DemandModel;
use crate::numeric::{brent, piecewise_derivative};

pub use band::{band_area, find_reorder_levels, Band};
pub use integrate::Fragment;
pub use profile::{price_profile, PriceProfile, PriceSegment};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("could not bracket the root of pi(w) = {target} within |w| <= 1e9")]
    RootBracketFailure { target: f64 },
    #[error("solution blew up (|w| = {w:e}) at z = {z}")]
    BlowUp { z: f64, w: f64 },
    #[error("adaptive step fell below the minimum at z = {z}")]
    StepUnderflow { z: f64 },
    #[error("no profitable order band: max w = {w_max} <= k = {unit_cost}")]
    NoBand { w_max: f64, unit_cost: f64 },
    #[error("band not bracketed by the fragment: {0}")]
    BandNotBracketed(String),
    #[error("z = {z} outside the fragment range [{lo}, {hi}]")]
    OutOfRange { z: f64, lo: f64, hi: f64 },
    #[error("no solution of A(gamma) = K: {reason} (bracket [{gamma_lo}, {gamma_hi}], areas [{area_lo}, {area_hi}])")]
    NoSolution {
        reason: String,
        gamma_lo: f64,
        gamma_hi: f64,
        area_lo: f64,
        area_hi: f64,
    },
    #[error("solution violates an invariant: {0}")]
    InvariantViolated(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

/// Model primitives: demand, holding cost, volatility and ordering costs.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub demand: DemandModel,
    pub cost: CostModel,
    /// Demand volatility σ.
    pub sigma: f64,
    /// Setup cost `K` per order.
    pub fixed_cost: f64,
    /// Unit ordering cost `k`.
    pub unit_cost: f64,
}

impl ModelParams {
    pub fn new(
        demand: DemandModel,
        cost: CostModel,
        sigma: f64,
        fixed_cost: f64,
        unit_cost: f64,
    ) -> Result<Self, SolverError> {
        for (name, v) in [("sigma", sigma), ("K (fixed_cost)", fixed_cost), ("k (unit_cost)", unit_cost)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SolverError::InvalidParams(format!("{name} must be > 0 (got {v})")));
            }
        }
        if unit_cost >= demand.p_max() {
            warn!(
                "unit cost k = {unit_cost} >= p_max = {}; ordering is never profitable at the margin",
                demand.p_max()
            );
        }
        Ok(Self { demand, cost, sigma, fixed_cost, unit_cost })
    }

    /// `w'(z)` from the ODE.
    #[inline]
    pub(crate) fn rhs(&self, gamma: f64, z: f64, w: f64) -> f64 {
        2.0 / (self.sigma * self.sigma) * (gamma + self.cost.holding(z) - self.demand.pi(w))
    }

    /// `(σ²/2)·dw + π(w) − h(z) − γ`.
    pub fn ode_residual(&self, gamma: f64, z: f64, w: f64, dw: f64) -> f64 {
        0.5 * self.sigma * self.sigma * dw + self.demand.pi(w) - self.cost.holding(z) - gamma
    }
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Largest integration step; also sets the grid density.
    pub max_step: f64,
    pub min_step: f64,
    /// `|w|` beyond which a shot is declared blown up.
    pub blow_up: f64,
    /// Fixed right truncation; disables the doubling certification.
    pub z_max: Option<f64>,
    /// Truncation rule: smallest `z` with `h(z) ≥ factor·(|γ_guess| + 1)`.
    pub truncation_factor: f64,
    /// Doubling stops once `γ` moves by less than this.
    pub truncation_tol: f64,
    pub max_truncation_doublings: usize,
    /// A shot stops once `w < k − left_margin` left of the turnover level.
    pub left_margin: f64,
    /// Relative width at which the `γ` bracket is considered converged.
    pub gamma_xtol: f64,
    pub max_gamma_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-10,
            max_step: 0.01,
            min_step: 1e-12,
            blow_up: 1e9,
            z_max: None,
            truncation_factor: 100.0,
            truncation_tol: 1e-8,
            max_truncation_doublings: 6,
            left_margin: 0.1,
            gamma_xtol: 1e-13,
            max_gamma_iterations: 200,
        }
    }
}

/// Max ODE residual over the interior of a fragment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residual {
    pub max_abs: f64,
    /// Level where the maximum occurs.
    pub at: f64,
    pub evaluated: usize,
    /// Nodes on pieces too short for a five-point stencil.
    pub skipped: usize,
}

/// Bookkeeping from a solve.
#[derive(Debug, Clone, Default)]
pub struct SolveDiagnostics {
    /// Number of backward shots taken across all truncation levels.
    pub shots: usize,
    /// Whether the non-monotone fallback root-finder was used.
    pub fallback_used: bool,
    /// Truncation levels tried, in order, with the `γ` found at each.
    pub truncation_history: Vec<(f64, f64)>,
}

/// Solution of the free-boundary problem.
#[derive(Debug, Clone)]
pub struct WSolution {
    /// Grid, `w` values and ODE slopes, from just left of `s` to `z_max`.
    pub fragment: Fragment,
    /// Optimal long-run average profit `γ*`.
    pub gamma: f64,
    pub reorder_level: f64,
    pub order_up_to: f64,
    /// Maximizer of `w`; the level where the optimal price peaks.
    pub turnover_level: f64,
    pub residual: Residual,
    pub z_max_used: f64,
    /// `∫_s^S (w − k) dz` at the solution.
    pub area: f64,
    /// `max(|w(s) − k|, |w(S) − k|)`.
    pub pasting_error: f64,
    pub diagnostics: SolveDiagnostics,
}

impl WSolution {
    pub fn grid(&self) -> &[f64] {
        &self.fragment.z
    }

    pub fn w_values(&self) -> &[f64] {
        &self.fragment.w
    }

    pub fn residual_max(&self) -> f64 {
        self.residual.max_abs
    }

    pub fn band(&self) -> Band {
        Band {
            reorder_level: self.reorder_level,
            order_up_to: self.order_up_to,
            turnover_level: self.turnover_level,
        }
    }
}

/// The `w` solving `π(w) = h(z_max) + γ`.
pub fn asymptotic_init(params: &ModelParams, gamma: f64, z_max: f64) -> Result<f64, SolverError> {
    let target = params.cost.holding(z_max) + gamma;
    invert_pi(&params.demand, target)
}

pub(crate) fn invert_pi(demand: &DemandModel, target: f64) -> Result<f64, SolverError> {
    const LIMIT: f64 = 1e9;
    let g = |w: f64| demand.pi(w) - target;
    // π is strictly decreasing: g(lo) > 0 > g(hi).
    let (mut lo, mut hi) = (-1.0, 1.0);
    while g(lo) <= 0.0 {
        if g(lo) == 0.0 {
            return Ok(lo);
        }
        lo *= 2.0;
        if lo < -LIMIT {
            return Err(SolverError::RootBracketFailure { target });
        }
    }
    while g(hi) >= 0.0 {
        if g(hi) == 0.0 {
            return Ok(hi);
        }
        hi *= 2.0;
        if hi > LIMIT {
            return Err(SolverError::RootBracketFailure { target });
        }
    }
    brent(g, lo, hi, g(lo), g(hi), 1e-12, 500).map_err(|_| SolverError::RootBracketFailure { target })
}

/// Integrates `w` backward from `(z_max, asymptotic_init(γ, z_max))` down to `z_stop`.
pub fn integrate_w(
    params: &ModelParams,
    gamma: f64,
    z_max: f64,
    z_stop: f64,
    opts: &SolverOptions,
) -> Result<Fragment, SolverError> {
    let w0 = asymptotic_init(params, gamma, z_max)?;
    integrate::integrate_backward(params, gamma, z_max, w0, z_stop, opts, |_, _, _| false)
}

/// Inclusive index ranges on which `w` is smooth: split at kink nodes
/// (shared) and between nodes where the price branch changes.
pub(crate) fn smooth_pieces(demand: &DemandModel, w: &[f64], kinks: &[usize]) -> Vec<(usize, usize)> {
    let n = w.len();
    let mut pieces = Vec::new();
    if n == 0 {
        return pieces;
    }
    let branches: Vec<_> = w.iter().map(|&x| demand.branch(x)).collect();
    let mut start = 0;
    for i in 1..n {
        // a kink node sitting on the switch belongs to both sides
        let shared = start == i - 1 && kinks.contains(&(i - 1));
        if branches[i] != branches[i - 1] && !shared {
            pieces.push((start, i - 1));
            start = i;
        }
        if kinks.contains(&i) && i != start {
            pieces.push((start, i));
            start = i;
        }
    }
    pieces.push((start, n - 1));
    pieces
}

/// ODE residual on interior nodes with `w'` from five-point finite
/// differences of the stored `w` values, never across a kink of `h` or a
/// switch of the price branch.
pub fn ode_residual(params: &ModelParams, fragment: &Fragment) -> Residual {
    let pieces = smooth_pieces(&params.demand, &fragment.w, &fragment.kinks);
    let dw = piecewise_derivative(&fragment.z, &fragment.w, &pieces, 5, 5);
    let n = fragment.len();
    let mut out = Residual { max_abs: 0.0, at: f64::NAN, evaluated: 0, skipped: 0 };
    for (i, slope) in dw.iter().enumerate().take(n.saturating_sub(1)).skip(1) {
        match *slope {
            Some(d) => {
                let r = params.ode_residual(fragment.gamma, fragment.z[i], fragment.w[i], d).abs();
                out.evaluated += 1;
                if r > out.max_abs || out.at.is_nan() {
                    out.max_abs = r;
                    out.at = fragment.z[i];
                }
            }
            None => out.skipped += 1,
        }
    }
    out
}

fn truncation_level(params: &ModelParams, gamma_guess: f64, opts: &SolverOptions) -> f64 {
    params.cost.level_crossing(opts.truncation_factor * (gamma_guess.abs() + 1.0), false)
}

/// Left limit for optimal-band shots; far beyond any reorder level.
fn left_limit(params: &ModelParams, gamma: f64, opts: &SolverOptions) -> f64 {
    let scale = gamma.abs() + params.demand.pi(params.unit_cost).abs() + params.fixed_cost + 1.0;
    params.cost.level_crossing(opts.truncation_factor * scale, true)
}

struct Shot {
    fragment: Fragment,
    band: Option<Band>,
    area: f64,
}

/// One backward shot at `γ`, stopped a margin left of `s`.
fn shoot_optimal(params: &ModelParams, gamma: f64, z_max: f64, opts: &SolverOptions) -> Result<Shot, SolverError> {
    let w0 = asymptotic_init(params, gamma, z_max)?;
    let k = params.unit_cost;
    let z_left = left_limit(params, gamma, opts).min(-1.0);
    let margin = opts.left_margin;
    let fragment = integrate::integrate_backward(params, gamma, z_max, w0, z_left, opts, |_, w, dw| {
        dw > 0.0 && w < k - margin
    })?;
    match find_reorder_levels(&fragment, k) {
        Ok(band) => {
            let area = band_area(&fragment, band.reorder_level, band.order_up_to, k)?;
            Ok(Shot { fragment, band: Some(band), area })
        }
        // no band counts as zero area
        Err(SolverError::NoBand { .. }) => Ok(Shot { fragment, band: None, area: 0.0 }),
        Err(e) => Err(e),
    }
}

struct GammaRoot {
    gamma: f64,
    evaluations: usize,
    fallback_used: bool,
}

/// Finds `γ` with `area(γ) = target`, with `area` expected to decrease in `γ`.
///
/// Bisection on an expanding bracket `[γ_lo, γ_hi]`; if a midpoint breaks
/// monotonicity, the current bracket is scanned for sign changes and Brent
/// takes over on the first one.
fn solve_gamma<F>(mut area: F, gamma_hi: f64, target: f64, opts: &SolverOptions) -> Result<GammaRoot, SolverError>
where
    F: FnMut(f64) -> Result<f64, SolverError>,
{
    let mut evaluations = 0usize;
    let mut eval = |g: f64, n: &mut usize| -> Result<f64, SolverError> {
        *n += 1;
        area(g)
    };
    let no_solution = |reason: &str, lo: f64, hi: f64, alo: f64, ahi: f64| SolverError::NoSolution {
        reason: reason.to_string(),
        gamma_lo: lo,
        gamma_hi: hi,
        area_lo: alo,
        area_hi: ahi,
    };

    let mut hi = gamma_hi;
    let mut lo = (-(target + 1.0)).min(hi - 1.0);
    let mut a_hi = eval(hi, &mut evaluations)?;
    let mut expansions = 0;
    while a_hi >= target {
        let width = hi - lo;
        lo = hi;
        hi += 2.0 * width;
        a_hi = eval(hi, &mut evaluations)?;
        expansions += 1;
        if expansions > 60 {
            return Err(no_solution("area never drops below K", lo, hi, f64::NAN, a_hi));
        }
    }
    let mut a_lo = eval(lo, &mut evaluations)?;
    expansions = 0;
    while a_lo <= target {
        let width = hi - lo;
        hi = lo;
        a_hi = a_lo;
        lo -= 2.0 * width;
        a_lo = eval(lo, &mut evaluations)?;
        expansions += 1;
        if expansions > 60 {
            return Err(no_solution("area never exceeds K", lo, hi, a_lo, a_hi));
        }
    }
    debug!("gamma bracket [{lo}, {hi}] with areas [{a_lo}, {a_hi}]");

    let noise = 1e-12 * target.abs().max(1.0);
    for _ in 0..opts.max_gamma_iterations {
        let scale = lo.abs().max(hi.abs()).max(1.0);
        if hi - lo <= opts.gamma_xtol * scale {
            return Ok(GammaRoot { gamma: 0.5 * (lo + hi), evaluations, fallback_used: false });
        }
        let mid = 0.5 * (lo + hi);
        let a_mid = eval(mid, &mut evaluations)?;
        if a_mid > a_lo + noise || a_mid < a_hi - noise {
            warn!("band area is not monotone in gamma near {mid}; switching to a bracketing scan");
            let gamma = scan_and_refine(&mut |g| eval(g, &mut evaluations), lo, hi, target, opts)
                .map_err(|e| match e {
                    SolverError::NoSolution { .. } => no_solution("no sign change in the scan", lo, hi, a_lo, a_hi),
                    other => other,
                })?;
            return Ok(GammaRoot { gamma, evaluations, fallback_used: true });
        }
        if a_mid > target {
            lo = mid;
            a_lo = a_mid;
        } else {
            hi = mid;
            a_hi = a_mid;
        }
    }
    Err(no_solution("bisection did not converge", lo, hi, a_lo, a_hi))
}

fn scan_and_refine<F>(area: &mut F, lo: f64, hi: f64, target: f64, opts: &SolverOptions) -> Result<f64, SolverError>
where
    F: FnMut(f64) -> Result<f64, SolverError>,
{
    const POINTS: usize = 65;
    let mut prev = (lo, area(lo)? - target);
    for i in 1..POINTS {
        let g = lo + (hi - lo) * i as f64 / (POINTS - 1) as f64;
        let cur = (g, area(g)? - target);
        if prev.1 > 0.0 && cur.1 <= 0.0 {
            let mut err = None;
            let root = brent(
                |x| match area(x) {
                    Ok(a) => a - target,
                    Err(e) => {
                        err = Some(e);
                        f64::NAN
                    }
                },
                prev.0,
                cur.0,
                prev.1,
                cur.1,
                opts.gamma_xtol * prev.0.abs().max(1.0),
                opts.max_gamma_iterations,
            );
            if let Some(e) = err {
                return Err(e);
            }
            return root.map_err(|e| SolverError::Numerical(format!("fallback root-finder: {e}")));
        }
        prev = cur;
    }
    Err(SolverError::NoSolution {
        reason: String::new(),
        gamma_lo: lo,
        gamma_hi: hi,
        area_lo: f64::NAN,
        area_hi: f64::NAN,
    })
}

/// Solution at the accepted truncation, its `γ`, and every `(z_max, γ)` tried.
type Certified<T> = (T, f64, Vec<(f64, f64)>);

/// Runs `solve(z_max)` at the rule-based truncation and doubles `z_max`
/// until the returned `γ` moves by less than `truncation_tol`.
fn certify_truncation<T, F>(
    params: &ModelParams,
    opts: &SolverOptions,
    mut solve: F,
) -> Result<Certified<T>, SolverError>
where
    F: FnMut(f64) -> Result<(T, f64), SolverError>,
{
    if let Some(z_max) = opts.z_max {
        let (out, gamma) = solve(z_max)?;
        return Ok((out, z_max, vec![(z_max, gamma)]));
    }
    let kappa = params.demand.max_revenue_rate();
    let mut z_max = truncation_level(params, kappa, opts);
    let (_, mut gamma) = solve(z_max)?;
    let mut history = vec![(z_max, gamma)];
    let needed = truncation_level(params, gamma, opts);
    if needed > z_max {
        z_max = needed;
        gamma = solve(z_max)?.1;
        history.push((z_max, gamma));
    }
    for _ in 0..opts.max_truncation_doublings {
        z_max *= 2.0;
        let (next, next_gamma) = solve(z_max)?;
        history.push((z_max, next_gamma));
        if (next_gamma - gamma).abs() < opts.truncation_tol {
            return Ok((next, z_max, history));
        }
        gamma = next_gamma;
    }
    Err(SolverError::NoSolution {
        reason: format!("gamma still moves after {} truncation doublings", opts.max_truncation_doublings),
        gamma_lo: gamma,
        gamma_hi: gamma,
        area_lo: f64::NAN,
        area_hi: f64::NAN,
    })
}

/// Solves for `(γ*, s*, S*, z*, w*)`.
pub fn solve_optimal(params: &ModelParams, opts: &SolverOptions) -> Result<WSolution, SolverError> {
    let kappa = params.demand.max_revenue_rate();
    let mut shots = 0usize;
    let mut fallback_used = false;
    let ((shot, gamma), z_max, history) = certify_truncation(params, opts, |z_max| {
        let root = solve_gamma(
            |g| shoot_optimal(params, g, z_max, opts).map(|s| s.area),
            kappa,
            params.fixed_cost,
            opts,
        )?;
        shots += root.evaluations + 1;
        fallback_used |= root.fallback_used;
        let shot = shoot_optimal(params, root.gamma, z_max, opts)?;
        Ok(((shot, root.gamma), root.gamma))
    })?;
    let band = shot.band.ok_or(SolverError::NoBand {
        w_max: shot.fragment.w.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        unit_cost: params.unit_cost,
    })?;
    let fragment = shot.fragment;
    let k = params.unit_cost;

    if !(band.reorder_level < band.turnover_level && band.turnover_level < band.order_up_to) {
        return Err(SolverError::InvariantViolated(format!(
            "expected s < z* < S, got {} / {} / {}",
            band.reorder_level, band.turnover_level, band.order_up_to
        )));
    }
    if band.turnover_level > 1e-9 {
        return Err(SolverError::InvariantViolated(format!(
            "turnover level z* = {} is positive",
            band.turnover_level
        )));
    }
    let sign_changes = first_difference_sign_changes(&fragment.w);
    if sign_changes != 1 {
        return Err(SolverError::InvariantViolated(format!(
            "w is not unimodal on the grid ({sign_changes} sign changes of its differences)"
        )));
    }

    let pasting_error = [band.reorder_level, band.order_up_to]
        .into_iter()
        .map(|z| fragment.value(z).map(|w| (w - k).abs()))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let residual = ode_residual(params, &fragment);
    Ok(WSolution {
        gamma,
        reorder_level: band.reorder_level,
        order_up_to: band.order_up_to,
        turnover_level: band.turnover_level,
        residual,
        z_max_used: z_max,
        area: shot.area,
        pasting_error,
        diagnostics: SolveDiagnostics { shots, fallback_used, truncation_history: history },
        fragment,
    })
}

/// Optimal average profit `γ_(s,S)` over pricing rules for a fixed band.
pub fn solve_given_band(
    params: &ModelParams,
    s: f64,
    big_s: f64,
    opts: &SolverOptions,
) -> Result<(f64, Fragment), SolverError> {
    if !(s < big_s) {
        return Err(SolverError::InvalidInput(format!("band needs s < S (got {s}, {big_s})")));
    }
    let kappa = params.demand.max_revenue_rate();
    let k = params.unit_cost;
    let z_stop = s - 5.0 * opts.max_step;
    let ((fragment, gamma), _, _) = certify_truncation(params, opts, |z_max| {
        if big_s >= z_max {
            return Err(SolverError::InvalidInput(format!("S = {big_s} must lie below z_max = {z_max}")));
        }
        let area = |g: f64| {
            let frag = integrate_w(params, g, z_max, z_stop, opts)?;
            band_area(&frag, s, big_s, k)
        };
        let root = solve_gamma(area, kappa, params.fixed_cost, opts)?;
        let frag = integrate_w(params, root.gamma, z_max, z_stop, opts)?;
        Ok(((frag, root.gamma), root.gamma))
    })?;
    Ok((gamma, fragment))
}

/// Number of sign changes in the sequence of first differences (zeros skipped).
pub fn first_difference_sign_changes(values: &[f64]) -> usize {
    let mut changes = 0;
    let mut last = 0.0f64;
    for d in values.windows(2).map(|p| p[1] - p[0]) {
        if d == 0.0 {
            continue;
        }
        if last != 0.0 && d.signum() != last.signum() {
            changes += 1;
        }
        last = d;
    }
    changes
}
