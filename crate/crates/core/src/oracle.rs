//! Markov-chain approximation of the controlled inventory, solved as an
//! average-reward decision process.
//!
//! On a grid of spacing `δ` the diffusion with drift `b = −μ(p)` becomes a
//! birth–death chain with
//!
//! ```text
//! up   = (σ²/2 + δ·max(b, 0)) / (σ² + δ|b|)
//! down = (σ²/2 + δ·max(−b, 0)) / (σ² + δ|b|)
//! Δt   = δ² / (σ² + δ|b|)
//! ```
//!
//! which matches the mean `b·Δt` and variance `σ²·Δt + O(δ·Δt)` of an
//! increment. The chain is uniformized at a common rate, ordering is an
//! instantaneous jump to any higher grid point, and relative value
//! iteration yields the optimal average reward with a stationary policy.
//! Nothing here uses the ODE characterization, so agreement with the
//! solver is an independent check.

use log::debug;
use thiserror::Error;

use crate::solver::{ModelParams, WSolution};

/// Fraction of the largest jump rate used as the uniformization rate;
/// below one so every state keeps a self-loop and the chain is aperiodic.
const UNIFORMIZATION_LOAD: f64 = 0.9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("invalid chain spec: {0}")]
    SpecInvalid(String),
    #[error("value iteration did not converge in {iterations} iterations (last spans {spans:?})")]
    NoConvergence { iterations: usize, spans: Vec<f64> },
}

/// Grid, price set and truncation of the approximating chain.
#[derive(Debug, Clone)]
pub struct ChainSpec {
    pub z_lo: f64,
    pub z_hi: f64,
    pub delta: f64,
    pub prices: Vec<f64>,
}

impl ChainSpec {
    /// `price_points` equally spaced prices on `[p_min, p_max]`.
    pub fn uniform(params: &ModelParams, z_lo: f64, z_hi: f64, delta: f64, price_points: usize) -> Self {
        let (lo, hi) = (params.demand.p_min(), params.demand.p_max());
        let n = price_points.max(2);
        let prices = (0..n).map(|j| lo + (hi - lo) * j as f64 / (n - 1) as f64).collect();
        Self { z_lo, z_hi, delta, prices }
    }

    fn validate(&self, params: &ModelParams) -> Result<(), OracleError> {
        let bad = |m: String| Err(OracleError::SpecInvalid(m));
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return bad(format!("delta must be > 0 (got {})", self.delta));
        }
        if !(self.z_lo < self.z_hi) {
            return bad(format!("need z_lo < z_hi (got {}, {})", self.z_lo, self.z_hi));
        }
        if ((self.z_hi - self.z_lo) / self.delta).round() < 4.0 {
            return bad("grid needs at least 5 states".into());
        }
        if self.prices.is_empty() {
            return bad("price grid is empty".into());
        }
        let (lo, hi) = (params.demand.p_min(), params.demand.p_max());
        if let Some(p) = self.prices.iter().find(|&&p| !(p >= lo && p <= hi)) {
            return bad(format!("price {p} outside [{lo}, {hi}]"));
        }
        Ok(())
    }
}

/// Birth–death transition data for one price.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub up: f64,
    pub down: f64,
    /// Interpolation interval `Δt`.
    pub dt: f64,
}

/// The discretized decision process.
#[derive(Debug, Clone)]
pub struct DecisionProcess {
    pub z: Vec<f64>,
    pub delta: f64,
    pub prices: Vec<f64>,
    /// Demand rate at each price.
    pub rates: Vec<f64>,
    pub transitions: Vec<Transition>,
    /// Holding cost at each state.
    pub holding: Vec<f64>,
    /// Uniformized time step.
    pub tau: f64,
    sigma: f64,
    fixed_cost: f64,
    unit_cost: f64,
}

/// Builds the locally consistent chain; drift at price `p` is `−μ(p)`.
pub fn build_chain(params: &ModelParams, spec: &ChainSpec) -> Result<DecisionProcess, OracleError> {
    spec.validate(params)?;
    let n = ((spec.z_hi - spec.z_lo) / spec.delta).round() as usize + 1;
    let z: Vec<f64> = (0..n).map(|i| spec.z_lo + i as f64 * spec.delta).collect();
    let sigma2 = params.sigma * params.sigma;
    let delta = spec.delta;
    let rates: Vec<f64> = spec
        .prices
        .iter()
        .map(|&p| params.demand.rate(p).map_err(|e| OracleError::SpecInvalid(e.to_string())))
        .collect::<Result<_, _>>()?;
    let transitions = rates.iter().map(|&mu| transition(-mu, sigma2, delta)).collect();
    let max_rate = rates.iter().copied().fold(0.0, f64::max);
    let tau = UNIFORMIZATION_LOAD * delta * delta / (sigma2 + delta * max_rate);
    Ok(DecisionProcess {
        holding: z.iter().map(|&x| params.cost.holding(x)).collect(),
        z,
        delta,
        prices: spec.prices.clone(),
        rates,
        transitions,
        tau,
        sigma: params.sigma,
        fixed_cost: params.fixed_cost,
        unit_cost: params.unit_cost,
    })
}

fn transition(drift: f64, sigma2: f64, delta: f64) -> Transition {
    let denom = sigma2 + delta * drift.abs();
    Transition {
        up: (0.5 * sigma2 + delta * drift.max(0.0)) / denom,
        down: (0.5 * sigma2 + delta * (-drift).max(0.0)) / denom,
        dt: delta * delta / denom,
    }
}

/// Optimal stationary policy and average reward of the chain.
#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub gamma: f64,
    pub z: Vec<f64>,
    /// Relative values (zero at the first state).
    pub values: Vec<f64>,
    /// Whether each state orders.
    pub order: Vec<bool>,
    /// Post-order level for each ordering state.
    pub target: Vec<Option<f64>>,
    /// Price charged at each state when not ordering.
    pub price: Vec<f64>,
    /// Highest ordering state `ŝ`.
    pub reorder_level: f64,
    /// Common order target `Ŝ`.
    pub order_up_to: f64,
    /// Center of the plateau of highest prices among non-ordering states.
    pub peak_price_level: f64,
    pub iterations: usize,
    /// Final span of the value increments, in reward per unit time.
    pub span: f64,
    /// Stationary probability of the two boundary states.
    pub boundary_mass: f64,
}

struct Sweep {
    /// Value after the best continuation (no order) step.
    cont: Vec<f64>,
    price_index: Vec<usize>,
    /// Best order target for each state, when ordering beats continuing.
    order_to: Vec<Option<usize>>,
    next: Vec<f64>,
}

impl DecisionProcess {
    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    /// One Bellman update of the uniformized chain.
    fn bellman(&self, v: &[f64], out: &mut Sweep) {
        let n = v.len();
        let diff = 0.5 * self.sigma * self.sigma * self.tau / (self.delta * self.delta);
        for i in 0..n {
            let lower = if i == 0 { v[0] } else { v[i - 1] };
            let upper = if i + 1 == n { v[n - 1] } else { v[i + 1] };
            // upwind marginal value for the downward drift
            let w = (v[i] - lower) / self.delta;
            let mut best = f64::NEG_INFINITY;
            let mut best_j = 0;
            for (j, (&p, &mu)) in self.prices.iter().zip(&self.rates).enumerate() {
                let gain = mu * (p - w);
                if gain > best {
                    best = gain;
                    best_j = j;
                }
            }
            out.cont[i] = v[i] + diff * (upper - 2.0 * v[i] + lower) + self.tau * (best - self.holding[i]);
            out.price_index[i] = best_j;
        }
        // ordering from i to q > i: cont(q) − K − k(z_q − z_i), via a suffix maximum
        let mut suffix = f64::NEG_INFINITY;
        let mut suffix_at = n - 1;
        for i in (0..n).rev() {
            let order = suffix + self.unit_cost * self.z[i] - self.fixed_cost;
            if order > out.cont[i] {
                out.next[i] = order;
                out.order_to[i] = Some(suffix_at);
            } else {
                out.next[i] = out.cont[i];
                out.order_to[i] = None;
            }
            let candidate = out.cont[i] - self.unit_cost * self.z[i];
            if candidate > suffix {
                suffix = candidate;
                suffix_at = i;
            }
        }
    }

    /// Stationary distribution of the chain under a fixed policy.
    ///
    /// States that order move like their target, so only the highest ordering
    /// state can carry mass. Balancing the probability flow across each cut
    /// between neighbours gives the distribution in one upward pass.
    fn stationary(&self, price_index: &[usize], order_to: &[Option<usize>]) -> Vec<f64> {
        let n = self.len();
        let half = 0.5 * self.sigma * self.sigma;
        let down_weight = |i: usize| half + self.delta * self.rates[price_index[i]];
        let last_order = order_to.iter().rposition(Option::is_some);
        let start = last_order.map_or(0, |i| i + 1);
        let mut pi = vec![0.0; n];
        if start >= n {
            return pi;
        }
        // a step down from `start` lands on an ordering state and jumps to its target
        let jump_to = last_order.and_then(|i| order_to[i]).unwrap_or(start);
        pi[start] = 1.0;
        for j in start..n - 1 {
            let jump = if j < jump_to && last_order.is_some() { pi[start] * down_weight(start) } else { 0.0 };
            pi[j + 1] = (pi[j] * half + jump) / down_weight(j + 1);
        }
        let total: f64 = pi.iter().sum();
        pi.iter_mut().for_each(|x| *x /= total);
        pi
    }
}

/// Relative value iteration, stopped once the span of `(TV − V)/τ` is below `tol`.
pub fn solve_average_reward(process: &DecisionProcess, tol: f64, max_iter: usize) -> Result<OracleSolution, OracleError> {
    let n = process.len();
    let mut v = vec![0.0; n];
    let mut sweep = Sweep {
        cont: vec![0.0; n],
        price_index: vec![0; n],
        order_to: vec![None; n],
        next: vec![0.0; n],
    };
    let mut spans = Vec::new();
    for iteration in 1..=max_iter {
        process.bellman(&v, &mut sweep);
        let (lo, hi) = sweep
            .next
            .iter()
            .zip(&v)
            .map(|(a, b)| a - b)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)));
        let span = (hi - lo) / process.tau;
        let gamma = 0.5 * (lo + hi) / process.tau;
        let base = sweep.next[0];
        for (x, y) in v.iter_mut().zip(&sweep.next) {
            *x = y - base;
        }
        if spans.len() == 8 {
            spans.remove(0);
        }
        spans.push(span);
        if span <= tol {
            debug!("value iteration converged after {iteration} iterations (span {span:e})");
            return Ok(extract(process, &sweep, v, gamma, iteration, span));
        }
    }
    Err(OracleError::NoConvergence { iterations: max_iter, spans })
}

fn extract(
    process: &DecisionProcess,
    sweep: &Sweep,
    values: Vec<f64>,
    gamma: f64,
    iterations: usize,
    span: f64,
) -> OracleSolution {
    let z = &process.z;
    let order: Vec<bool> = sweep.order_to.iter().map(Option::is_some).collect();
    let target: Vec<Option<f64>> = sweep.order_to.iter().map(|t| t.map(|q| z[q])).collect();
    let last_order = order.iter().rposition(|&o| o);
    let reorder_level = last_order.map_or(f64::NAN, |i| z[i]);
    let order_up_to = last_order.and_then(|i| target[i]).unwrap_or(f64::NAN);
    let price: Vec<f64> = sweep.price_index.iter().map(|&j| process.prices[j]).collect();

    let first_free = last_order.map_or(0, |i| i + 1);
    let top = price[first_free..].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let plateau: Vec<usize> = (first_free..z.len()).filter(|&i| price[i] == top).collect();
    let peak_price_level = if plateau.is_empty() {
        f64::NAN
    } else {
        plateau.iter().map(|&i| z[i]).sum::<f64>() / plateau.len() as f64
    };

    let pi = process.stationary(&sweep.price_index, &sweep.order_to);
    let boundary_mass = pi[0] + pi[pi.len() - 1];
    OracleSolution {
        gamma,
        z: z.clone(),
        values,
        order,
        target,
        price,
        reorder_level,
        order_up_to,
        peak_price_level,
        iterations,
        span,
        boundary_mass,
    }
}

/// Differences between the solver and the chain oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonReport {
    pub gamma_abs_diff: f64,
    pub gamma_rel_diff: f64,
    pub reorder_diff: f64,
    pub order_up_to_diff: f64,
    pub peak_diff: f64,
    /// Largest `|p*(z) − p_o(z)|` over oracle states inside the solver's range
    /// where neither policy orders.
    pub price_sup_diff: f64,
    pub boundary_mass: f64,
    /// Whether the oracle's ordering states form a down-set of the grid.
    pub order_region_is_down_set: bool,
}

pub fn compare(params: &ModelParams, solution: &WSolution, oracle: &OracleSolution) -> ComparisonReport {
    let lo = solution.reorder_level.max(oracle.reorder_level);
    let hi = solution.fragment.z_max();
    let mut price_sup_diff: f64 = 0.0;
    for (i, &z) in oracle.z.iter().enumerate() {
        if z <= lo || z >= hi || oracle.order[i] {
            continue;
        }
        // the oracle's upwind marginal value sits half a cell below the state
        let at = (z - 0.5 * (oracle.z[1] - oracle.z[0])).max(solution.fragment.z_min());
        if let Ok(w) = solution.fragment.value(at) {
            price_sup_diff = price_sup_diff.max((params.demand.best_price(w) - oracle.price[i]).abs());
        }
    }
    let last = oracle.order.iter().rposition(|&o| o);
    let order_region_is_down_set = last.is_some_and(|i| oracle.order[..=i].iter().all(|&o| o));
    ComparisonReport {
        gamma_abs_diff: (solution.gamma - oracle.gamma).abs(),
        gamma_rel_diff: (solution.gamma - oracle.gamma).abs() / solution.gamma.abs(),
        reorder_diff: (solution.reorder_level - oracle.reorder_level).abs(),
        order_up_to_diff: (solution.order_up_to - oracle.order_up_to).abs(),
        peak_diff: (solution.turnover_level - oracle.peak_price_level).abs(),
        price_sup_diff,
        boundary_mass: oracle.boundary_mass,
        order_region_is_down_set,
    }
}
