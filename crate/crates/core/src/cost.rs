//! Holding/shortage cost rates `h(z)`.
//!
//! A valid cost rate vanishes at zero, is nonnegative, strictly convex with
//! its minimum at zero, and grows at most polynomially with a declared
//! integer exponent `n`. All of this is checked at construction on a fixed
//! validation grid; piecewise-linear rates fail the strict convexity check.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::numeric::golden_max;

/// Validation grid: `VALIDATION_POINTS` levels on `[-VALIDATION_HALF_WIDTH, VALIDATION_HALF_WIDTH]`.
pub const VALIDATION_POINTS: usize = 2001;
pub const VALIDATION_HALF_WIDTH: f64 = 50.0;
/// Far probes used for the coercivity and growth checks.
pub const PROBE: f64 = 1e4;

pub type CostFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CostError {
    #[error("invalid cost model: {0}")]
    ModelInvalid(String),
    #[error("holding cost derivative is undefined at z = 0")]
    UndefinedAtZero,
}

#[derive(Clone)]
pub enum CostFamily {
    /// `c_plus·z²` for `z ≥ 0`, `c_minus·z²` for `z < 0`.
    AsymmetricQuadratic { c_plus: f64, c_minus: f64 },
    /// `c_plus·z^a_plus` for `z ≥ 0`, `c_minus·|z|^a_minus` for `z < 0`.
    Power { c_plus: f64, c_minus: f64, a_plus: f64, a_minus: f64 },
    Custom { h: CostFn, dh: CostFn, growth_exponent: u32 },
}

impl fmt::Debug for CostFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::AsymmetricQuadratic { c_plus, c_minus } => f
                .debug_struct("AsymmetricQuadratic")
                .field("c_plus", c_plus)
                .field("c_minus", c_minus)
                .finish(),
            Self::Power { c_plus, c_minus, a_plus, a_minus } => f
                .debug_struct("Power")
                .field("c_plus", c_plus)
                .field("c_minus", c_minus)
                .field("a_plus", a_plus)
                .field("a_minus", a_minus)
                .finish(),
            Self::Custom { growth_exponent, .. } => {
                f.debug_struct("Custom").field("growth_exponent", growth_exponent).finish()
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct CostModel {
    family: CostFamily,
    growth_exponent: u32,
}

fn validation_grid() -> impl Iterator<Item = f64> + Clone {
    let step = 2.0 * VALIDATION_HALF_WIDTH / (VALIDATION_POINTS - 1) as f64;
    (0..VALIDATION_POINTS).map(move |i| -VALIDATION_HALF_WIDTH + i as f64 * step)
}

impl CostModel {
    pub fn new(family: CostFamily) -> Result<Self, CostError> {
        let growth_exponent = match &family {
            CostFamily::AsymmetricQuadratic { c_plus, c_minus } => {
                if !(*c_plus > 0.0 && *c_minus > 0.0) {
                    return Err(CostError::ModelInvalid(format!(
                        "quadratic cost needs c_plus > 0 and c_minus > 0 (got {c_plus}, {c_minus})"
                    )));
                }
                2
            }
            CostFamily::Power { c_plus, c_minus, a_plus, a_minus } => {
                if !(*c_plus > 0.0 && *c_minus > 0.0) {
                    return Err(CostError::ModelInvalid(format!(
                        "power cost needs c_plus > 0 and c_minus > 0 (got {c_plus}, {c_minus})"
                    )));
                }
                if !(*a_plus > 1.0 && *a_minus > 1.0) {
                    return Err(CostError::ModelInvalid(format!(
                        "power cost needs exponents > 1 for strict convexity (got {a_plus}, {a_minus})"
                    )));
                }
                a_plus.max(*a_minus).ceil() as u32
            }
            CostFamily::Custom { growth_exponent, .. } => {
                if *growth_exponent < 1 {
                    return Err(CostError::ModelInvalid("growth exponent must be >= 1".into()));
                }
                *growth_exponent
            }
        };
        let model = Self { family, growth_exponent };
        model.validate()?;
        Ok(model)
    }

    pub fn quadratic(c_plus: f64, c_minus: f64) -> Result<Self, CostError> {
        Self::new(CostFamily::AsymmetricQuadratic { c_plus, c_minus })
    }

    pub fn power(c_plus: f64, c_minus: f64, a_plus: f64, a_minus: f64) -> Result<Self, CostError> {
        Self::new(CostFamily::Power { c_plus, c_minus, a_plus, a_minus })
    }

    pub fn custom<H, D>(h: H, dh: D, growth_exponent: u32) -> Result<Self, CostError>
    where
        H: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self::new(CostFamily::Custom {
            h: Arc::new(h),
            dh: Arc::new(dh),
            growth_exponent,
        })
    }

    pub fn family(&self) -> &CostFamily {
        &self.family
    }

    pub fn growth_exponent(&self) -> u32 {
        self.growth_exponent
    }

    fn validate(&self) -> Result<(), CostError> {
        let invalid = |msg: String| Err(CostError::ModelInvalid(msg));
        let h0 = self.holding(0.0);
        if h0 != 0.0 {
            return invalid(format!("h(0) must be 0 (got {h0})"));
        }
        let grid: Vec<f64> = validation_grid().chain([-PROBE, PROBE]).collect();
        for &z in &grid {
            let h = self.holding(z);
            if !(h >= 0.0) || !h.is_finite() {
                return invalid(format!("h must be finite and nonnegative: h({z}) = {h}"));
            }
            if z != 0.0 {
                let dh = self.dh(z);
                if !(dh * z > 0.0) {
                    return invalid(format!("h' must have the sign of z: h'({z}) = {dh}"));
                }
                if z.abs() > 1e-3 && z.abs() <= VALIDATION_HALF_WIDTH {
                    let e = 1e-6 * z.abs().max(1.0);
                    let fd = (self.holding(z + e) - self.holding(z - e)) / (2.0 * e);
                    if (fd - dh).abs() > 1e-6 * dh.abs().max(1.0) {
                        return invalid(format!("h' disagrees with finite differences at z = {z}: {dh} vs {fd}"));
                    }
                }
            }
        }
        // strict convexity on consecutive triples of the grid
        let pts: Vec<(f64, f64)> = validation_grid().map(|z| (z, self.holding(z))).collect();
        for t in pts.windows(3) {
            let left = (t[1].1 - t[0].1) / (t[1].0 - t[0].0);
            let right = (t[2].1 - t[1].1) / (t[2].0 - t[1].0);
            if !(left < right) {
                return invalid(format!("h must be strictly convex; fails around z = {}", t[1].0));
            }
        }
        // polynomial bound fitted on the grid must still hold at the probes
        let n = self.growth_exponent as i32;
        let c1 = pts.iter().filter(|(z, _)| z.abs() < 1.0).map(|p| p.1).fold(0.0, f64::max);
        let c2 = pts
            .iter()
            .filter(|(z, _)| z.abs() >= 1.0)
            .map(|(z, h)| h / z.abs().powi(n))
            .fold(0.0, f64::max);
        for z in [-PROBE, PROBE] {
            let bound = c1 + c2 * z.abs().powi(n);
            if self.holding(z) > bound * (1.0 + 1e-9) {
                return invalid(format!(
                    "h grows faster than |z|^{n}: h({z}) = {} exceeds {bound}",
                    self.holding(z)
                ));
            }
        }
        Ok(())
    }

    /// Cost rate `h(z)`.
    #[inline]
    pub fn holding(&self, z: f64) -> f64 {
        match &self.family {
            CostFamily::AsymmetricQuadratic { c_plus, c_minus } => {
                if z >= 0.0 {
                    c_plus * z * z
                } else {
                    c_minus * z * z
                }
            }
            CostFamily::Power { c_plus, c_minus, a_plus, a_minus } => {
                if z >= 0.0 {
                    c_plus * z.powf(*a_plus)
                } else {
                    c_minus * (-z).powf(*a_minus)
                }
            }
            CostFamily::Custom { h, .. } => h(z),
        }
    }

    #[inline]
    fn dh(&self, z: f64) -> f64 {
        match &self.family {
            CostFamily::AsymmetricQuadratic { c_plus, c_minus } => {
                if z >= 0.0 {
                    2.0 * c_plus * z
                } else {
                    2.0 * c_minus * z
                }
            }
            CostFamily::Power { c_plus, c_minus, a_plus, a_minus } => {
                if z >= 0.0 {
                    c_plus * a_plus * z.powf(a_plus - 1.0)
                } else {
                    -c_minus * a_minus * (-z).powf(a_minus - 1.0)
                }
            }
            CostFamily::Custom { dh, .. } => dh(z),
        }
    }

    /// `h'(z)` for `z ≠ 0`.
    pub fn holding_derivative(&self, z: f64) -> Result<f64, CostError> {
        if z == 0.0 {
            Err(CostError::UndefinedAtZero)
        } else {
            Ok(self.dh(z))
        }
    }

    /// Constants `(d1 > 0, d2)` with `h(z) ≥ d1·|z| + d2` everywhere.
    ///
    /// `d1 = min(h(1), h(−1))` is the smaller secant slope from the origin,
    /// which convexity and `h(0) = 0` extend to all `|z| ≥ 1`; `d2` is the
    /// minimum of `h(z) − d1·|z|`, attained on `[−1, 1]`.
    pub fn lower_linear_bound(&self) -> (f64, f64) {
        let d1 = self.holding(1.0).min(self.holding(-1.0));
        let gap = |z: f64| self.holding(z) - d1 * z.abs();
        let (_, right) = golden_max(|z| -gap(z), 0.0, 1.0, 1e-12);
        let (_, left) = golden_max(|z| -gap(z), -1.0, 0.0, 1e-12);
        let grid_min = validation_grid().map(gap).fold(f64::INFINITY, f64::min);
        let d2 = (-right).min(-left).min(grid_min);
        (d1, d2)
    }

    /// Smallest `z ≥ 0` with `h(z) ≥ level` (to a relative 1e-12), found by
    /// doubling then bisection. Mirrored to `z ≤ 0` when `negative` is set.
    pub fn level_crossing(&self, level: f64, negative: bool) -> f64 {
        let sign = if negative { -1.0 } else { 1.0 };
        if level <= 0.0 {
            return 0.0;
        }
        let mut hi = 1.0;
        while self.holding(sign * hi) < level {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        while hi - lo > 1e-12 * hi {
            let mid = 0.5 * (lo + hi);
            if self.holding(sign * mid) >= level {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        sign * hi
    }
}
