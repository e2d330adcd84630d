#![allow(dead_code)]

use sspolicy::{CostModel, DemandModel, ModelParams};

/// Linear demand `10 − p` on `[2, 6]`, `h(z) = z²`, `σ = 1`, `K = 1`, `k = 1`.
pub fn default_fixture() -> ModelParams {
    ModelParams::new(
        DemandModel::linear(10.0, 2.0, 6.0).unwrap(),
        CostModel::quadratic(1.0, 1.0).unwrap(),
        1.0,
        1.0,
        1.0,
    )
    .unwrap()
}

/// Hyperbolic demand `2/(p + 1)` on `[1, 5]`, `h(z) = z²`, `σ = 1`, `K = 1`, `k = 0.5`.
pub fn hyperbolic_fixture() -> ModelParams {
    ModelParams::new(
        DemandModel::hyperbolic(1.0, 2.0, 1.0, 5.0).unwrap(),
        CostModel::quadratic(1.0, 1.0).unwrap(),
        1.0,
        1.0,
        0.5,
    )
    .unwrap()
}

/// Linear demand `7 − p` on `[4, 6]` with a large setup cost, so the price
/// moves through all three branches on each side of the turnover level.
pub fn continuous_pricing_fixture() -> ModelParams {
    ModelParams::new(
        DemandModel::linear(7.0, 4.0, 6.0).unwrap(),
        CostModel::quadratic(1.0, 1.0).unwrap(),
        1.0,
        20.0,
        0.5,
    )
    .unwrap()
}
