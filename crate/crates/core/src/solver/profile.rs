//! Optimal price along the solved marginal value and its branch structure.

use super::{ModelParams, WSolution};
use crate::demand::PriceBranch;

/// Maximal interval on which the optimal price stays on one branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriceSegment {
    pub branch: PriceBranch,
    pub start: f64,
    pub end: f64,
}

/// Tabulated optimal price on `[s, z_max]`.
#[derive(Debug, Clone)]
pub struct PriceProfile {
    pub z: Vec<f64>,
    pub price: Vec<f64>,
    pub segments: Vec<PriceSegment>,
    /// Levels where the price switches branch, increasing.
    pub breakpoints: Vec<f64>,
}

impl PriceProfile {
    /// Whether the tabulated price is nondecreasing up to `turnover` and
    /// nonincreasing after it, up to `tol`.
    pub fn is_unimodal_about(&self, turnover: f64, tol: f64) -> bool {
        self.z.windows(2).zip(self.price.windows(2)).all(|(z, p)| {
            let dp = p[1] - p[0];
            if z[1] <= turnover {
                dp >= -tol
            } else if z[0] >= turnover {
                dp <= tol
            } else {
                true
            }
        })
    }
}

/// `p*(z) = best_price(w*(z))` on a uniform table of `points` levels over
/// `[s, z_max]`. Branch switches are located on the solver grid and
/// refined by bisection on the interpolated `w`.
pub fn price_profile(params: &ModelParams, solution: &WSolution, points: usize) -> PriceProfile {
    let demand = &params.demand;
    let frag = &solution.fragment;
    let lo = solution.reorder_level;
    let hi = frag.z_max();
    let w_at = |z: f64| frag.value(z.clamp(frag.z_min(), hi)).unwrap_or(f64::NAN);

    let points = points.max(2);
    let z: Vec<f64> = (0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64).collect();
    let price = z.iter().map(|&x| demand.best_price(w_at(x))).collect();

    let mut nodes = vec![lo];
    nodes.extend(frag.z.iter().copied().filter(|&x| x > lo));
    let mut breakpoints = Vec::new();
    let mut segments = Vec::new();
    let mut start = lo;
    let mut current = demand.branch(w_at(lo));
    for pair in nodes.windows(2) {
        let next = demand.branch(w_at(pair[1]));
        if next == current {
            continue;
        }
        let (mut a, mut b) = (pair[0], pair[1]);
        for _ in 0..100 {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            if demand.branch(w_at(mid)) == current {
                a = mid;
            } else {
                b = mid;
            }
        }
        let at = 0.5 * (a + b);
        segments.push(PriceSegment { branch: current, start, end: at });
        breakpoints.push(at);
        start = at;
        current = next;
    }
    segments.push(PriceSegment { branch: current, start, end: hi });
    PriceProfile { z, price, segments, breakpoints }
}
