//! Price-dependent demand rates and the pricing kernel.
//!
//! For a marginal inventory value `w` the instantaneous payoff of charging
//! `p` is `Π(p, w) = μ(p)·(p − w)`. The kernel exposes the smallest
//! maximizing price `p_π(w)`, the optimized payoff `π(w) = Π(p_π(w), w)` and
//! its derivative `π'(w) = −μ(p_π(w))`.
//!
//! Two families have closed-form maximizers:
//!
//! ```text
//! hyperbolic  μ(p) = λ1 / (p + λ0)   p_π(w) = p̄ if w > −λ0, else p̲
//! linear      μ(p) = A − p           p_π(w) = clamp((A + w)/2, p̲, p̄)
//! ```
//!
//! Custom families use golden-section search followed by a left-to-right
//! sweep so that ties resolve to the smallest maximizer.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::numeric::golden_max;

/// Number of equally spaced prices used to validate model assumptions.
pub const VALIDATION_POINTS: usize = 1001;

const GOLDEN_TOL: f64 = 1e-10;
const TIE_TOL: f64 = 1e-9;

pub type RateFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DemandError {
    #[error("price {price} outside [{p_min}, {p_max}]")]
    PriceOutOfBounds { price: f64, p_min: f64, p_max: f64 },
    #[error("invalid demand model: {0}")]
    ModelInvalid(String),
}

#[derive(Clone)]
pub enum DemandFamily {
    /// `μ(p) = λ1 / (p + λ0)`
    Hyperbolic { lambda0: f64, lambda1: f64 },
    /// `μ(p) = A − p`, requires `A > p̄`
    Linear { a: f64 },
    /// User-supplied rate and rate derivative.
    Custom { rate: RateFn, rate_derivative: RateFn },
}

impl fmt::Debug for DemandFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Hyperbolic { lambda0, lambda1 } => f
                .debug_struct("Hyperbolic")
                .field("lambda0", lambda0)
                .field("lambda1", lambda1)
                .finish(),
            Self::Linear { a } => f.debug_struct("Linear").field("a", a).finish(),
            Self::Custom { .. } => f.write_str("Custom"),
        }
    }
}

/// Which part of the price interval `p_π(w)` falls in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PriceBranch {
    Lower,
    Interior,
    Upper,
}

/// Demand model on a price interval `[p_min, p_max]`. Immutable once built.
#[derive(Debug, Clone)]
pub struct DemandModel {
    p_min: f64,
    p_max: f64,
    family: DemandFamily,
}

impl DemandModel {
    pub fn new(p_min: f64, p_max: f64, family: DemandFamily) -> Result<Self, DemandError> {
        if !(p_min.is_finite() && p_max.is_finite()) || p_min < 0.0 {
            return Err(DemandError::ModelInvalid(format!(
                "price bounds must be finite with p_min >= 0 (got [{p_min}, {p_max}])"
            )));
        }
        if p_max <= p_min {
            return Err(DemandError::ModelInvalid(format!(
                "p_max must exceed p_min (got [{p_min}, {p_max}])"
            )));
        }
        match &family {
            DemandFamily::Hyperbolic { lambda0, lambda1 } => {
                if !(*lambda0 > 0.0 && *lambda1 > 0.0) {
                    return Err(DemandError::ModelInvalid(format!(
                        "hyperbolic demand needs lambda0 > 0 and lambda1 > 0 (got {lambda0}, {lambda1})"
                    )));
                }
            }
            DemandFamily::Linear { a } => {
                if !(*a > p_max) {
                    return Err(DemandError::ModelInvalid(format!(
                        "linear demand needs A > p_max (got A = {a}, p_max = {p_max})"
                    )));
                }
            }
            DemandFamily::Custom { .. } => {}
        }
        let model = Self { p_min, p_max, family };
        model.validate()?;
        Ok(model)
    }

    pub fn hyperbolic(lambda0: f64, lambda1: f64, p_min: f64, p_max: f64) -> Result<Self, DemandError> {
        Self::new(p_min, p_max, DemandFamily::Hyperbolic { lambda0, lambda1 })
    }

    pub fn linear(a: f64, p_min: f64, p_max: f64) -> Result<Self, DemandError> {
        Self::new(p_min, p_max, DemandFamily::Linear { a })
    }

    pub fn custom<R, D>(p_min: f64, p_max: f64, rate: R, rate_derivative: D) -> Result<Self, DemandError>
    where
        R: Fn(f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self::new(
            p_min,
            p_max,
            DemandFamily::Custom {
                rate: Arc::new(rate),
                rate_derivative: Arc::new(rate_derivative),
            },
        )
    }

    pub fn p_min(&self) -> f64 {
        self.p_min
    }

    pub fn p_max(&self) -> f64 {
        self.p_max
    }

    pub fn family(&self) -> &DemandFamily {
        &self.family
    }

    /// Checks positivity, strict decrease and the derivative handle on the
    /// validation grid.
    fn validate(&self) -> Result<(), DemandError> {
        let n = VALIDATION_POINTS;
        let step = (self.p_max - self.p_min) / (n - 1) as f64;
        let fd_h = 1e-5 * (self.p_max - self.p_min).max(1e-3);
        for i in 0..n {
            let p = if i + 1 == n { self.p_max } else { self.p_min + i as f64 * step };
            let mu = self.mu(p);
            if !(mu > 0.0) || !mu.is_finite() {
                return Err(DemandError::ModelInvalid(format!("demand rate must be positive: mu({p}) = {mu}")));
            }
            let dmu = self.mu_prime(p);
            if !(dmu < 0.0) {
                return Err(DemandError::ModelInvalid(format!(
                    "demand rate must be strictly decreasing: mu'({p}) = {dmu}"
                )));
            }
            let fd = if p - fd_h >= self.p_min && p + fd_h <= self.p_max {
                (self.mu(p + fd_h) - self.mu(p - fd_h)) / (2.0 * fd_h)
            } else if p - fd_h < self.p_min {
                (-3.0 * mu + 4.0 * self.mu(p + fd_h) - self.mu(p + 2.0 * fd_h)) / (2.0 * fd_h)
            } else {
                (3.0 * mu - 4.0 * self.mu(p - fd_h) + self.mu(p - 2.0 * fd_h)) / (2.0 * fd_h)
            };
            if (fd - dmu).abs() > 1e-6 * dmu.abs().max(1.0) {
                return Err(DemandError::ModelInvalid(format!(
                    "rate derivative disagrees with finite differences at p = {p}: {dmu} vs {fd}"
                )));
            }
        }
        Ok(())
    }

    fn check_price(&self, p: f64) -> Result<(), DemandError> {
        if p >= self.p_min && p <= self.p_max {
            Ok(())
        } else {
            Err(DemandError::PriceOutOfBounds {
                price: p,
                p_min: self.p_min,
                p_max: self.p_max,
            })
        }
    }

    /// Unchecked `μ(p)`.
    #[inline]
    pub(crate) fn mu(&self, p: f64) -> f64 {
        match &self.family {
            DemandFamily::Hyperbolic { lambda0, lambda1 } => lambda1 / (p + lambda0),
            DemandFamily::Linear { a } => a - p,
            DemandFamily::Custom { rate, .. } => rate(p),
        }
    }

    #[inline]
    pub(crate) fn mu_prime(&self, p: f64) -> f64 {
        match &self.family {
            DemandFamily::Hyperbolic { lambda0, lambda1 } => -lambda1 / ((p + lambda0) * (p + lambda0)),
            DemandFamily::Linear { .. } => -1.0,
            DemandFamily::Custom { rate_derivative, .. } => rate_derivative(p),
        }
    }

    /// Demand rate `μ(p)`.
    pub fn rate(&self, p: f64) -> Result<f64, DemandError> {
        self.check_price(p)?;
        let mu = self.mu(p);
        if mu > 0.0 {
            Ok(mu)
        } else {
            Err(DemandError::ModelInvalid(format!("mu({p}) = {mu} is not positive")))
        }
    }

    pub fn rate_derivative(&self, p: f64) -> Result<f64, DemandError> {
        self.check_price(p)?;
        Ok(self.mu_prime(p))
    }

    /// `Π(p, w) = μ(p)·(p − w)`.
    pub fn payoff(&self, p: f64, w: f64) -> Result<f64, DemandError> {
        self.check_price(p)?;
        Ok(self.payoff_unchecked(p, w))
    }

    #[inline]
    pub(crate) fn payoff_unchecked(&self, p: f64, w: f64) -> f64 {
        self.mu(p) * (p - w)
    }

    /// Smallest price in `[p_min, p_max]` maximizing `Π(·, w)`.
    pub fn best_price(&self, w: f64) -> f64 {
        match &self.family {
            DemandFamily::Hyperbolic { lambda0, .. } => {
                // Π is constant in p at w = −λ0; the smallest maximizer is p_min.
                if w + lambda0 > 0.0 {
                    self.p_max
                } else {
                    self.p_min
                }
            }
            DemandFamily::Linear { a } => (0.5 * (a + w)).clamp(self.p_min, self.p_max),
            DemandFamily::Custom { .. } => self.best_price_search(w),
        }
    }

    fn best_price_search(&self, w: f64) -> f64 {
        let payoff = |p: f64| self.payoff_unchecked(p, w);
        let (p_golden, v_golden) = golden_max(payoff, self.p_min, self.p_max, GOLDEN_TOL);
        let n = VALIDATION_POINTS;
        let step = (self.p_max - self.p_min) / (n - 1) as f64;
        let grid = (0..n).map(|i| if i + 1 == n { self.p_max } else { self.p_min + i as f64 * step });
        let best = grid.clone().map(payoff).fold(v_golden, f64::max);
        // Left-to-right sweep over grid ∪ {golden point}.
        let mut golden_pending = true;
        for p in grid {
            if golden_pending && p_golden <= p {
                golden_pending = false;
                if v_golden >= best - TIE_TOL {
                    return p_golden;
                }
            }
            if payoff(p) >= best - TIE_TOL {
                return p;
            }
        }
        p_golden
    }

    /// Branch of `[p_min, p_max]` a price lies on.
    pub fn branch_of(&self, p: f64) -> PriceBranch {
        if p <= self.p_min {
            PriceBranch::Lower
        } else if p >= self.p_max {
            PriceBranch::Upper
        } else {
            PriceBranch::Interior
        }
    }

    /// Branch of the optimal price `p_π(w)`.
    pub fn branch(&self, w: f64) -> PriceBranch {
        self.branch_of(self.best_price(w))
    }

    /// Optimized payoff `π(w)`.
    pub fn pi(&self, w: f64) -> f64 {
        self.payoff_unchecked(self.best_price(w), w)
    }

    /// `π'(w) = −μ(p_π(w))`.
    pub fn pi_derivative(&self, w: f64) -> f64 {
        -self.mu(self.best_price(w))
    }

    /// Values of `w` where `p_π` switches branch, when known in closed form.
    pub(crate) fn branch_thresholds(&self) -> Vec<f64> {
        match &self.family {
            DemandFamily::Hyperbolic { lambda0, .. } => vec![-lambda0],
            DemandFamily::Linear { a } => vec![2.0 * self.p_min - a, 2.0 * self.p_max - a],
            DemandFamily::Custom { .. } => Vec::new(),
        }
    }

    /// `κ = max_p p·μ(p)`, which equals `π(0)`.
    pub fn max_revenue_rate(&self) -> f64 {
        self.pi(0.0)
    }
}
