//! `(s, S, p)` policies, the candidate value function and numerical checks
//! of the upper-bound conditions that certify optimality.
//!
//! Under a policy the inventory is raised to `S` whenever it is at or below
//! `s`, and the price charged at level `z` is `p*(z) = p_π(w*(z))`. The value
//! function built from a solution is
//!
//! ```text
//! V*(z) = ∫_{s*}^{z} w*(y) dy   for z ≥ s*
//! V*(z) = k·(z − s*)           for z < s*
//! ```

use std::io::{self, Write};
use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::demand::DemandModel;
use crate::format::fmt_sig;
use crate::numeric::{piecewise_derivative, HermiteCell};
use crate::solver::{smooth_pieces, ModelParams, WSolution};

/// Significant digits in exported curves.
pub const CSV_DIGITS: usize = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("verification failed ({check}): value {value:e} exceeds {tol:e} at z = {z}{}", price_suffix(*.price))]
    VerificationFailed {
        check: &'static str,
        z: f64,
        price: Option<f64>,
        value: f64,
        tol: f64,
    },
}

fn price_suffix(price: Option<f64>) -> String {
    price.map(|p| format!(", p = {p}")).unwrap_or_default()
}

/// Pricing part of a policy.
#[derive(Debug, Clone)]
pub enum PriceRule {
    /// `p(z) = p_π(w(z))` with `w` linearly interpolated between levels.
    Table { z: Vec<f64>, w: Vec<f64> },
    Constant(f64),
}

/// Order decision and posted price at one inventory level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Action {
    pub order: f64,
    pub price: f64,
}

/// An `(s, S)` ordering rule with a level-dependent price.
#[derive(Debug)]
pub struct Policy {
    reorder_level: f64,
    order_up_to: f64,
    rule: PriceRule,
    demand: DemandModel,
    clamped: AtomicU64,
}

impl Clone for Policy {
    fn clone(&self) -> Self {
        Self {
            reorder_level: self.reorder_level,
            order_up_to: self.order_up_to,
            rule: self.rule.clone(),
            demand: self.demand.clone(),
            clamped: AtomicU64::new(self.clamped.load(Ordering::Relaxed)),
        }
    }
}

impl Policy {
    pub fn new(reorder_level: f64, order_up_to: f64, rule: PriceRule, demand: DemandModel) -> Result<Self, PolicyError> {
        if !(reorder_level < order_up_to) || !reorder_level.is_finite() || !order_up_to.is_finite() {
            return Err(PolicyError::InvalidPolicy(format!(
                "need finite s < S (got s = {reorder_level}, S = {order_up_to})"
            )));
        }
        match &rule {
            PriceRule::Constant(p) => {
                if !(*p >= demand.p_min() && *p <= demand.p_max()) {
                    return Err(PolicyError::InvalidPolicy(format!(
                        "price {p} outside [{}, {}]",
                        demand.p_min(),
                        demand.p_max()
                    )));
                }
            }
            PriceRule::Table { z, w } => {
                if z.len() < 2 || z.len() != w.len() {
                    return Err(PolicyError::InvalidPolicy("price table needs >= 2 matching rows".into()));
                }
                if z.windows(2).any(|p| !(p[1] > p[0])) || w.iter().any(|v| !v.is_finite()) {
                    return Err(PolicyError::InvalidPolicy("price table levels must increase strictly".into()));
                }
            }
        }
        Ok(Self { reorder_level, order_up_to, rule, demand, clamped: AtomicU64::new(0) })
    }

    /// Policy of a solution: band `(s*, S*)` and the table of `w*` on `[s*, z_max]`.
    pub fn from_solution(params: &ModelParams, solution: &WSolution) -> Self {
        let frag = &solution.fragment;
        let s = solution.reorder_level;
        let first = frag.locate(s) + 1;
        let mut z = vec![s];
        let mut w = vec![frag.value(s).unwrap_or(params.unit_cost)];
        z.extend_from_slice(&frag.z[first..]);
        w.extend_from_slice(&frag.w[first..]);
        Self::new(s, solution.order_up_to, PriceRule::Table { z, w }, params.demand.clone())
            .expect("a solved band is a valid policy")
    }

    pub fn constant_price(reorder_level: f64, order_up_to: f64, price: f64, demand: DemandModel) -> Result<Self, PolicyError> {
        Self::new(reorder_level, order_up_to, PriceRule::Constant(price), demand)
    }

    /// Same pricing rule with a different band.
    pub fn with_band(&self, reorder_level: f64, order_up_to: f64) -> Result<Self, PolicyError> {
        Self::new(reorder_level, order_up_to, self.rule.clone(), self.demand.clone())
    }

    pub fn reorder_level(&self) -> f64 {
        self.reorder_level
    }

    pub fn order_up_to(&self) -> f64 {
        self.order_up_to
    }

    pub fn rule(&self) -> &PriceRule {
        &self.rule
    }

    /// Number of price queries above the table that were clamped to its last row.
    pub fn clamped_queries(&self) -> u64 {
        self.clamped.load(Ordering::Relaxed)
    }

    /// Price posted at level `z` (no ordering); `z` below the table uses its first row.
    pub fn price_at(&self, z: f64) -> f64 {
        match &self.rule {
            PriceRule::Constant(p) => *p,
            PriceRule::Table { z: zs, w } => {
                let n = zs.len();
                let w_here = if z <= zs[0] {
                    w[0]
                } else if z >= zs[n - 1] {
                    if z > zs[n - 1] {
                        self.clamped.fetch_add(1, Ordering::Relaxed);
                    }
                    w[n - 1]
                } else {
                    let i = zs.partition_point(|&x| x <= z) - 1;
                    let t = (z - zs[i]) / (zs[i + 1] - zs[i]);
                    w[i] + t * (w[i + 1] - w[i])
                };
                self.demand.best_price(w_here)
            }
        }
    }

    /// Order quantity and price at pre-order level `z`: order up to `S` when
    /// `z ≤ s`, then price at the post-order level.
    pub fn apply(&self, z: f64) -> Action {
        if z <= self.reorder_level {
            Action { order: self.order_up_to - z, price: self.price_at(self.order_up_to) }
        } else {
            Action { order: 0.0, price: self.price_at(z) }
        }
    }
}

/// Candidate value function `V*` with derivative `w*` (constant `k` below `s*`).
#[derive(Debug, Clone)]
pub struct ValueFunction {
    /// Levels from `s*` to the solver's truncation level.
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub derivative: Vec<f64>,
    /// ODE slope `w*'` at each level, used for interpolation.
    slope: Vec<f64>,
    /// Nodes where `h` or the price branch has a kink.
    kinks: Vec<usize>,
    pub reorder_level: f64,
    pub order_up_to: f64,
    pub turnover_level: f64,
    pub unit_cost: f64,
}

impl ValueFunction {
    fn cell(&self, i: usize) -> HermiteCell {
        HermiteCell {
            x0: self.grid[i],
            x1: self.grid[i + 1],
            y0: self.derivative[i],
            y1: self.derivative[i + 1],
            d0: self.slope[i],
            d1: self.slope[i + 1],
        }
    }

    fn locate(&self, z: f64) -> usize {
        let i = self.grid.partition_point(|&x| x <= z);
        i.saturating_sub(1).min(self.grid.len() - 2)
    }

    pub fn z_max(&self) -> f64 {
        self.grid[self.grid.len() - 1]
    }

    /// `V*(z)`; levels above the grid are clamped.
    pub fn value(&self, z: f64) -> f64 {
        if z < self.reorder_level {
            return self.unit_cost * (z - self.reorder_level);
        }
        let z = z.min(self.z_max());
        let i = self.locate(z);
        self.values[i] + self.cell(i).integral(self.grid[i], z)
    }

    /// `V*'(z)`; levels above the grid are clamped.
    pub fn slope(&self, z: f64) -> f64 {
        if z < self.reorder_level {
            return self.unit_cost;
        }
        let z = z.min(self.z_max());
        self.cell(self.locate(z)).value(z)
    }
}

/// Builds `V*` by cumulative Simpson integration of `w*` from `s*`.
pub fn build_value_function(params: &ModelParams, solution: &WSolution) -> ValueFunction {
    let frag = &solution.fragment;
    let s = solution.reorder_level;
    let k = params.unit_cost;
    // Drop a node that nearly coincides with s* to keep stencils well-conditioned.
    let first = frag.z.partition_point(|&x| x <= s + 1e-9);
    let mut grid = vec![s];
    let mut derivative = vec![frag.value(s).unwrap_or(k)];
    let mut slope = vec![params.rhs(frag.gamma, s, derivative[0])];
    grid.extend_from_slice(&frag.z[first..]);
    derivative.extend_from_slice(&frag.w[first..]);
    slope.extend_from_slice(&frag.slope[first..]);
    let kinks = frag.kinks.iter().filter(|&&i| i >= first).map(|&i| i - first + 1).collect();

    let mut values = Vec::with_capacity(grid.len());
    values.push(0.0);
    for i in 0..grid.len() - 1 {
        let cell = HermiteCell { x0: grid[i], x1: grid[i + 1], y0: derivative[i], y1: derivative[i + 1], d0: slope[i], d1: slope[i + 1] };
        values.push(values[i] + cell.integral(grid[i], grid[i + 1]));
    }
    ValueFunction {
        grid,
        values,
        derivative,
        slope,
        kinks,
        reorder_level: s,
        order_up_to: solution.order_up_to,
        turnover_level: solution.turnover_level,
        unit_cost: k,
    }
}

/// Tolerances for [`verify_upper_bound`].
#[derive(Debug, Clone, Copy)]
pub struct VerificationTolerances {
    /// Generator inequality.
    pub generator: f64,
    /// `V*' ≤ k` outside the band.
    pub slope: f64,
    /// Direct impulse inequality on sampled pairs.
    pub impulse: f64,
}

impl Default for VerificationTolerances {
    fn default() -> Self {
        Self { generator: 1e-6, slope: 1e-8, impulse: 1e-8 }
    }
}

/// Options for [`evaluate_upper_bound`].
#[derive(Debug, Clone, Copy)]
pub struct VerificationOptions {
    /// Equally spaced prices checked at each level, besides the exact maximizer.
    pub price_points: usize,
    /// Levels checked below `s*`.
    pub below_points: usize,
    /// Random `(z1, z2)` pairs for the impulse inequality.
    pub impulse_pairs: usize,
    pub seed: u64,
}

impl Default for VerificationOptions {
    fn default() -> Self {
        Self { price_points: 101, below_points: 401, impulse_pairs: 100, seed: 0x5eed }
    }
}

/// Outcome of the numerical upper-bound checks.
#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    /// `max_{z,p} (σ²/2)V*'' + Π(p, V*') − h − γ` over all checked levels.
    pub generator_max: f64,
    pub generator_max_at: (f64, f64),
    /// Largest `|max_p (…)|` on `[s*, z_max]`, where the ODE should hold.
    pub generator_abs_max_above: f64,
    /// Largest `π(k) − h(z) − γ` over levels below `s*` (negative when sound).
    pub below_reorder_max: f64,
    /// `max (V*'(z) − k)` over levels outside `(s*, S*)`.
    pub slope_excess_max: f64,
    pub slope_excess_at: f64,
    /// Least-squares exponent of `|V*'|` against `z` on `[z_max/4, z_max]`.
    pub growth_exponent: f64,
    /// Allowed exponent: holding-cost growth plus one.
    pub growth_bound: f64,
    /// `max V*(z1) − V*(z2) − K − k(z1 − z2)` over sampled `z2 < z1`.
    pub impulse_max: f64,
    pub impulse_max_at: (f64, f64),
    /// Levels where the second derivative could not be estimated.
    pub skipped_levels: usize,
}

impl VerificationReport {
    /// First failing check, if any.
    pub fn check(&self, tol: &VerificationTolerances) -> Result<(), PolicyError> {
        if !(self.generator_max <= tol.generator) {
            return Err(PolicyError::VerificationFailed {
                check: "generator",
                z: self.generator_max_at.0,
                price: Some(self.generator_max_at.1),
                value: self.generator_max,
                tol: tol.generator,
            });
        }
        if !(self.slope_excess_max <= tol.slope) {
            return Err(PolicyError::VerificationFailed {
                check: "slope outside band",
                z: self.slope_excess_at,
                price: None,
                value: self.slope_excess_max,
                tol: tol.slope,
            });
        }
        if !(self.growth_exponent <= self.growth_bound) {
            return Err(PolicyError::VerificationFailed {
                check: "growth",
                z: f64::NAN,
                price: None,
                value: self.growth_exponent,
                tol: self.growth_bound,
            });
        }
        if !(self.impulse_max <= tol.impulse) {
            return Err(PolicyError::VerificationFailed {
                check: "impulse",
                z: self.impulse_max_at.0,
                price: None,
                value: self.impulse_max,
                tol: tol.impulse,
            });
        }
        Ok(())
    }

    pub fn passed(&self, tol: &VerificationTolerances) -> bool {
        self.check(tol).is_ok()
    }
}

/// Runs every upper-bound check and returns the report without judging it.
pub fn evaluate_upper_bound(
    params: &ModelParams,
    vf: &ValueFunction,
    gamma: f64,
    opts: &VerificationOptions,
) -> VerificationReport {
    let demand = &params.demand;
    let half_var = 0.5 * params.sigma * params.sigma;
    let k = vf.unit_cost;
    let (s, big_s) = (vf.reorder_level, vf.order_up_to);
    let prices: Vec<f64> = (0..opts.price_points.max(2))
        .map(|i| demand.p_min() + (demand.p_max() - demand.p_min()) * i as f64 / (opts.price_points.max(2) - 1) as f64)
        .collect();
    let generator = |z: f64, w: f64, dw: f64| -> (f64, f64) {
        let base = half_var * dw - params.cost.holding(z) - gamma;
        let exact = demand.best_price(w);
        prices
            .iter()
            .copied()
            .chain(std::iter::once(exact))
            .map(|p| (base + demand.payoff(p, w).unwrap_or(f64::NEG_INFINITY), p))
            .fold((f64::NEG_INFINITY, exact), |best, c| if c.0 > best.0 { c } else { best })
    };

    let mut report = VerificationReport {
        generator_max: f64::NEG_INFINITY,
        generator_max_at: (f64::NAN, f64::NAN),
        generator_abs_max_above: 0.0,
        below_reorder_max: f64::NEG_INFINITY,
        slope_excess_max: f64::NEG_INFINITY,
        slope_excess_at: f64::NAN,
        growth_exponent: f64::NAN,
        growth_bound: params.cost.growth_exponent() as f64 + 1.0,
        impulse_max: f64::NEG_INFINITY,
        impulse_max_at: (f64::NAN, f64::NAN),
        skipped_levels: 0,
    };

    // Below s*: V*' = k and V*'' = 0.
    let below_width = (2.0 * (big_s - s)).max(5.0);
    let nb = opts.below_points.max(1);
    for i in 0..nb {
        let z = s - below_width + below_width * i as f64 / nb as f64;
        let (g, p) = generator(z, k, 0.0);
        report.below_reorder_max = report.below_reorder_max.max(g);
        if g > report.generator_max {
            report.generator_max = g;
            report.generator_max_at = (z, p);
        }
        if 0.0 > report.slope_excess_max {
            report.slope_excess_max = 0.0;
            report.slope_excess_at = z;
        }
    }

    // On [s*, z_max]: V*'' from one-sided-at-kinks differences of V*'.
    let pieces = smooth_pieces(demand, &vf.derivative, &vf.kinks);
    let second = piecewise_derivative(&vf.grid, &vf.derivative, &pieces, 5, 5);
    for (i, &z) in vf.grid.iter().enumerate() {
        let w = vf.derivative[i];
        match second[i] {
            Some(dw) => {
                let (g, p) = generator(z, w, dw);
                report.generator_abs_max_above = report.generator_abs_max_above.max(g.abs());
                if g > report.generator_max {
                    report.generator_max = g;
                    report.generator_max_at = (z, p);
                }
            }
            None => report.skipped_levels += 1,
        }
        if z >= big_s || i == 0 {
            let excess = w - k;
            if excess > report.slope_excess_max {
                report.slope_excess_max = excess;
                report.slope_excess_at = z;
            }
        }
    }

    // Growth of V*' on the upper quarter of the grid.
    let z_max = vf.z_max();
    let (xs, ys): (Vec<f64>, Vec<f64>) = vf
        .grid
        .iter()
        .zip(&vf.derivative)
        .filter(|(&z, &w)| z >= 0.25 * z_max && z > 0.0 && w != 0.0)
        .map(|(&z, &w)| (z.ln(), w.abs().ln()))
        .unzip();
    report.growth_exponent = least_squares_slope(&xs, &ys);

    // Impulse inequality on random pairs z2 < z1.
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let lo = s - below_width;
    let hi = z_max.min(big_s + 10.0);
    for _ in 0..opts.impulse_pairs {
        let a: f64 = rng.random_range(lo..hi);
        let b: f64 = rng.random_range(lo..hi);
        let (z2, z1) = if a < b { (a, b) } else { (b, a) };
        let excess = vf.value(z1) - vf.value(z2) - params.fixed_cost - k * (z1 - z2);
        if excess > report.impulse_max {
            report.impulse_max = excess;
            report.impulse_max_at = (z1, z2);
        }
    }
    report
}

/// Evaluates the upper-bound checks and fails on the first one exceeding `tol`.
pub fn verify_upper_bound(
    params: &ModelParams,
    vf: &ValueFunction,
    gamma: f64,
    opts: &VerificationOptions,
    tol: &VerificationTolerances,
) -> Result<VerificationReport, PolicyError> {
    let report = evaluate_upper_bound(params, vf, gamma, opts);
    report.check(tol)?;
    Ok(report)
}

fn least_squares_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    if x.len() < 2 {
        return f64::NAN;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Writes `z,w,V,price` rows on the value-function grid.
pub fn write_curves_csv<W: Write>(mut out: W, vf: &ValueFunction, policy: &Policy) -> io::Result<()> {
    writeln!(out, "z,w,V,price")?;
    for i in 0..vf.grid.len() {
        let z = vf.grid[i];
        writeln!(
            out,
            "{},{},{},{}",
            fmt_sig(z, CSV_DIGITS),
            fmt_sig(vf.derivative[i], CSV_DIGITS),
            fmt_sig(vf.values[i], CSV_DIGITS),
            fmt_sig(policy.price_at(z), CSV_DIGITS)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demand() -> DemandModel {
        DemandModel::linear(10.0, 2.0, 6.0).unwrap()
    }

    #[test]
    fn apply_orders_below_reorder_level() {
        let policy = Policy::constant_price(-1.0, 3.0, 5.0, demand()).unwrap();
        let a = policy.apply(-3.0);
        assert_eq!(a, Action { order: 6.0, price: 5.0 });
        assert_eq!(policy.apply(-1.0).order, 4.0);
        assert_eq!(policy.apply(4.0), Action { order: 0.0, price: 5.0 });
    }

    #[test]
    fn apply_is_idempotent_above_reorder_level() {
        let policy = Policy::constant_price(-1.0, 3.0, 5.0, demand()).unwrap();
        for z in [-2.0, -1.0, 0.5, 7.0] {
            let first = policy.apply(z);
            let second = policy.apply(z + first.order);
            assert_eq!(second.order, 0.0);
        }
    }

    #[test]
    fn table_interpolates_w_then_maps_to_price() {
        // w from 0 to 4 on [0, 1]: interior branch p = (10 + w)/2 up to p̄ = 6 at w = 2.
        let rule = PriceRule::Table { z: vec![0.0, 1.0], w: vec![0.0, 4.0] };
        let policy = Policy::new(-1.0, 0.5, rule, demand()).unwrap();
        assert!((policy.price_at(0.25) - 5.5).abs() < 1e-15);
        assert_eq!(policy.price_at(0.9), 6.0);
        assert_eq!(policy.clamped_queries(), 0);
        assert_eq!(policy.price_at(2.0), 6.0);
        assert_eq!(policy.clamped_queries(), 1);
        // z ≤ s orders to S = 0.5, priced at w(0.5) = 2
        assert_eq!(policy.apply(-2.0), Action { order: 2.5, price: 6.0 });
    }

    #[test]
    fn invalid_policies_rejected() {
        assert!(Policy::constant_price(1.0, 1.0, 5.0, demand()).is_err());
        assert!(Policy::constant_price(0.0, 1.0, 7.0, demand()).is_err());
        let rule = PriceRule::Table { z: vec![0.0, 0.0], w: vec![1.0, 1.0] };
        assert!(Policy::new(0.0, 1.0, rule, demand()).is_err());
    }

    #[test]
    fn least_squares_recovers_power() {
        let x: Vec<f64> = (1..20).map(|i| (i as f64).ln()).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 0.3).collect();
        assert!((least_squares_slope(&x, &y) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn verification_failure_names_the_check() {
        let report = VerificationReport {
            generator_max: 1e-3,
            generator_max_at: (0.5, 4.0),
            generator_abs_max_above: 1e-3,
            below_reorder_max: -1.0,
            slope_excess_max: 0.0,
            slope_excess_at: 0.0,
            growth_exponent: 2.0,
            growth_bound: 3.0,
            impulse_max: 0.0,
            impulse_max_at: (0.0, 0.0),
            skipped_levels: 0,
        };
        let err = report.check(&VerificationTolerances::default()).unwrap_err();
        assert!(matches!(err, PolicyError::VerificationFailed { check: "generator", .. }));
        assert!(err.to_string().contains("p = 4"));
    }
}
