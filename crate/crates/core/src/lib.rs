//! Joint dynamic pricing and `(s, S)` ordering for an inventory driven by
//! Brownian demand.
//!
//! The crate solves the free-boundary problem characterizing the optimal
//! reorder band and pricing rule, verifies the candidate value function,
//! simulates policies by Euler–Maruyama and cross-checks the solution with
//! a Markov-chain approximation.

// NaN must fail validation, so bounds are written as `!(x > lo)`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cost;
pub mod demand;
pub mod format;
pub mod numeric;
pub mod oracle;
pub mod policy;
pub mod sim;
pub mod solver;

pub use cost::{CostError, CostFamily, CostModel};
pub use demand::{DemandError, DemandFamily, DemandModel, PriceBranch};
pub use solver::{ModelParams, SolverError, SolverOptions, WSolution};
pub use policy::{Policy, PolicyError, PriceRule, ValueFunction, VerificationReport};
pub use sim::{ProfitEstimate, SimConfig, SimError, SimResult};
