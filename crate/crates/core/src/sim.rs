//! Euler–Maruyama simulation of the controlled inventory and Monte-Carlo
//! estimates of the long-run average profit.
//!
//! Each step applies the policy (ordering up to `S` when the level is at or
//! below `s`), accrues revenue `p·μ(p)·dt` and holding cost `h(Z)·dt`, then
//! moves `Z ← Z − μ(p)·dt + σ·√dt·N(0, 1)`. Replication `r` draws from the
//! ChaCha stream `r` of the configured seed, so results do not depend on
//! thread scheduling.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::format::fmt_sig;
use crate::policy::Policy;
use crate::solver::ModelParams;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    ConfigInvalid(String),
    #[error("failed to write trajectory: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    /// Initial inventory level.
    pub x0: f64,
    pub horizon: f64,
    pub dt: f64,
    /// Initial stretch excluded from the averages.
    pub burn_in: f64,
    pub seed: u64,
    pub replications: usize,
    /// Accrue the zero-mean revenue term from demand noise as well.
    pub revenue_noise: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            x0: 0.0,
            horizon: 5000.0,
            dt: 1e-3,
            burn_in: 500.0,
            seed: 1,
            replications: 32,
            revenue_noise: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::ConfigInvalid(msg));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be > 0 (got {})", self.dt));
        }
        if !(self.burn_in >= 0.0 && self.burn_in < self.horizon) || !self.horizon.is_finite() {
            return bad(format!("need 0 <= burn_in < T (got {}, {})", self.burn_in, self.horizon));
        }
        if self.horizon - self.burn_in < self.dt {
            return bad("measurement window shorter than one step".into());
        }
        if self.replications == 0 {
            return bad("replications must be >= 1".into());
        }
        if !self.x0.is_finite() {
            return bad(format!("x0 must be finite (got {})", self.x0));
        }
        Ok(())
    }

    fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    fn first_measured_step(&self) -> usize {
        (self.burn_in / self.dt).round() as usize
    }
}

/// Rates per unit time over the measurement window, averaged over replications.
#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    /// `revenue_rate − holding_rate − ordering_rate`.
    pub avg_profit: f64,
    /// Standard error of the per-replication profit (NaN for one replication).
    pub stderr: f64,
    pub revenue_rate: f64,
    pub holding_rate: f64,
    pub ordering_rate: f64,
    pub order_count_rate: f64,
    /// Lowest pre-order level seen at a step boundary.
    pub min_level_observed: f64,
    /// Level right after each order, checked to equal `S`.
    pub max_post_order_error: f64,
    pub per_replication: Vec<f64>,
    /// Price queries above the policy table.
    pub clamped_price_queries: u64,
}

/// Mean, standard error and normal 95% interval across replications.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfitEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub ci95: (f64, f64),
}

impl SimResult {
    /// Normal-approximation interval around the replication mean.
    pub fn estimate(&self) -> ProfitEstimate {
        ProfitEstimate {
            mean: self.avg_profit,
            stderr: self.stderr,
            ci95: (self.avg_profit - 1.96 * self.stderr, self.avg_profit + 1.96 * self.stderr),
        }
    }
}

impl ProfitEstimate {
    pub fn contains(&self, x: f64) -> bool {
        self.ci95.0 <= x && x <= self.ci95.1
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Totals {
    revenue: f64,
    holding: f64,
    ordering: f64,
    orders: u64,
    min_level: f64,
    post_order_error: f64,
}

/// State after a step, handed to trajectory observers.
struct StepRecord {
    t: f64,
    level: f64,
    price: f64,
    revenue: f64,
    holding: f64,
    ordering: f64,
}

fn run_replication<O>(params: &ModelParams, policy: &Policy, cfg: &SimConfig, replication: u64, mut observe: O) -> Totals
where
    O: FnMut(&StepRecord),
{
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(replication);
    let sqrt_dt = cfg.dt.sqrt();
    let sigma = params.sigma;
    let first = cfg.first_measured_step();
    let big_s = policy.order_up_to();

    let mut totals = Totals { min_level: f64::INFINITY, ..Totals::default() };
    let (mut cum_rev, mut cum_hold, mut cum_ord) = (0.0, 0.0, 0.0);
    let mut z = cfg.x0;
    for step in 0..cfg.steps() {
        let measured = step >= first;
        if measured {
            totals.min_level = totals.min_level.min(z);
        }
        let action = policy.apply(z);
        if action.order > 0.0 {
            let cost = params.fixed_cost + params.unit_cost * action.order;
            z += action.order;
            cum_ord += cost;
            if measured {
                totals.ordering += cost;
                totals.orders += 1;
                totals.post_order_error = totals.post_order_error.max((z - big_s).abs());
            }
        }
        let price = action.price;
        let rate = params.demand.mu(price);
        let noise: f64 = rng.sample(StandardNormal);
        let d_b = sqrt_dt * noise;
        let mut revenue = price * rate * cfg.dt;
        if cfg.revenue_noise {
            // demand increment is μ·dt − σ·dB
            revenue -= price * sigma * d_b;
        }
        let holding = params.cost.holding(z) * cfg.dt;
        cum_rev += revenue;
        cum_hold += holding;
        if measured {
            totals.revenue += revenue;
            totals.holding += holding;
        }
        z += -rate * cfg.dt + sigma * d_b;
        observe(&StepRecord {
            t: (step + 1) as f64 * cfg.dt,
            level: z,
            price,
            revenue: cum_rev,
            holding: cum_hold,
            ordering: cum_ord,
        });
    }
    totals
}

/// Simulates `cfg.replications` independent paths in parallel.
pub fn simulate(params: &ModelParams, policy: &Policy, cfg: &SimConfig) -> Result<SimResult, SimError> {
    cfg.validate()?;
    let window = (cfg.steps() - cfg.first_measured_step()) as f64 * cfg.dt;
    let runs: Vec<Totals> = (0..cfg.replications as u64)
        .into_par_iter()
        .map(|r| run_replication(params, policy, cfg, r, |_| {}))
        .collect();

    let n = runs.len() as f64;
    let per_replication: Vec<f64> = runs.iter().map(|t| (t.revenue - t.holding - t.ordering) / window).collect();
    let mean_of = |f: fn(&Totals) -> f64| runs.iter().map(f).sum::<f64>() / (n * window);
    let revenue_rate = mean_of(|t| t.revenue);
    let holding_rate = mean_of(|t| t.holding);
    let ordering_rate = mean_of(|t| t.ordering);
    let order_count_rate = mean_of(|t| t.orders as f64);
    let avg_profit = revenue_rate - holding_rate - ordering_rate;
    let stderr = if runs.len() > 1 {
        let m = per_replication.iter().sum::<f64>() / n;
        let var = per_replication.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        f64::NAN
    };
    Ok(SimResult {
        avg_profit,
        stderr,
        revenue_rate,
        holding_rate,
        ordering_rate,
        order_count_rate,
        min_level_observed: runs.iter().map(|t| t.min_level).fold(f64::INFINITY, f64::min),
        max_post_order_error: runs.iter().map(|t| t.post_order_error).fold(0.0, f64::max),
        per_replication,
        clamped_price_queries: policy.clamped_queries(),
    })
}

/// Mean profit with its standard error and 95% interval; needs two or more replications.
pub fn estimate_profit(params: &ModelParams, policy: &Policy, cfg: &SimConfig) -> Result<ProfitEstimate, SimError> {
    if cfg.replications < 2 {
        return Err(SimError::ConfigInvalid("estimating a standard error needs >= 2 replications".into()));
    }
    Ok(simulate(params, policy, cfg)?.estimate())
}

/// Writes one replication's path as CSV `t,Z,price,cum_revenue,cum_holding,cum_ordering`,
/// keeping every `every`-th step. Cumulative amounts start at `t = 0`.
pub fn write_trajectory<W: Write>(
    params: &ModelParams,
    policy: &Policy,
    cfg: &SimConfig,
    replication: u64,
    every: usize,
    mut out: W,
) -> Result<(), SimError> {
    cfg.validate()?;
    let every = every.max(1);
    writeln!(out, "t,Z,price,cum_revenue,cum_holding,cum_ordering")?;
    let mut count = 0usize;
    let mut failure = None;
    run_replication(params, policy, cfg, replication, |rec| {
        count += 1;
        if failure.is_some() || !count.is_multiple_of(every) {
            return;
        }
        let row = [rec.t, rec.level, rec.price, rec.revenue, rec.holding, rec.ordering]
            .map(|v| fmt_sig(v, 12))
            .join(",");
        if let Err(e) = writeln!(out, "{row}") {
            failure = Some(e);
        }
    });
    match failure {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}
