//! Run configuration: one TOML file with a section per module.
//!
//! ```toml
//! [demand]
//! family = "linear"
//! a = 10.0
//! p_min = 2.0
//! p_max = 6.0
//!
//! [cost]
//! family = "quadratic"
//! c_plus = 1.0
//! c_minus = 1.0
//!
//! [model]
//! sigma = 1.0
//! fixed_cost = 1.0
//! unit_cost = 1.0
//! ```
//!
//! The `solver`, `sim`, `oracle` and `output` sections are optional.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use sspolicy::oracle::ChainSpec;
use sspolicy::{CostModel, DemandModel, ModelParams, SimConfig, SolverOptions};

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub demand: DemandSection,
    pub cost: CostSection,
    pub model: ModelSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub oracle: OracleSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum DemandSection {
    /// `μ(p) = a − p`.
    Linear { a: f64, p_min: f64, p_max: f64 },
    /// `μ(p) = lambda1 / (p + lambda0)`.
    Hyperbolic { lambda0: f64, lambda1: f64, p_min: f64, p_max: f64 },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum CostSection {
    /// `c_plus·z²` above zero, `c_minus·z²` below.
    Quadratic { c_plus: f64, c_minus: f64 },
    /// `c_plus·z^a_plus` above zero, `c_minus·|z|^a_minus` below.
    Power { c_plus: f64, c_minus: f64, a_plus: f64, a_minus: f64 },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub sigma: f64,
    pub fixed_cost: f64,
    pub unit_cost: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
    /// Fixed truncation level; disables the doubling rule.
    pub z_max: Option<f64>,
    pub truncation_factor: f64,
    pub truncation_tol: f64,
    /// Points in the tabulated price profile.
    pub profile_points: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverOptions::default();
        Self {
            rtol: d.rtol,
            atol: d.atol,
            max_step: d.max_step,
            z_max: d.z_max,
            truncation_factor: d.truncation_factor,
            truncation_tol: d.truncation_tol,
            profile_points: 2001,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub x0: Option<f64>,
    pub horizon: f64,
    pub dt: f64,
    pub burn_in: f64,
    pub seed: u64,
    pub replications: usize,
    pub revenue_noise: bool,
    /// Keep every n-th step in a dumped trajectory.
    pub trajectory_every: usize,
}

impl Default for SimSection {
    fn default() -> Self {
        let d = SimConfig::default();
        Self {
            x0: None,
            horizon: d.horizon,
            dt: d.dt,
            burn_in: d.burn_in,
            seed: d.seed,
            replications: d.replications,
            revenue_noise: d.revenue_noise,
            trajectory_every: 100,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSection {
    pub delta: f64,
    pub z_lo: f64,
    pub z_hi: f64,
    pub price_points: usize,
    pub tol: f64,
    pub max_iterations: usize,
    /// Allowed relative gap between the solver and chain average profits.
    pub gamma_rel_tol: f64,
}

impl Default for OracleSection {
    fn default() -> Self {
        Self {
            delta: 0.05,
            z_lo: -8.0,
            z_hi: 20.0,
            price_points: 81,
            tol: 1e-9,
            max_iterations: 2_000_000,
            gamma_rel_tol: 0.02,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

impl RunConfig {
    /// Parses without validating; see [`RunConfig::validate`].
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Checks every section against its module's invariants and returns
    /// the model parameters.
    pub fn validate(&self) -> Result<ModelParams, CliError> {
        let params = self.params()?;
        self.sim_config(None).validate().map_err(|e| CliError::Validation(e.to_string()))?;
        let s = &self.solver;
        for (name, v) in [("solver.rtol", s.rtol), ("solver.atol", s.atol), ("solver.max_step", s.max_step)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CliError::Validation(format!("{name} must be > 0 (got {v})")));
            }
        }
        if let Some(z) = s.z_max {
            if !(z > 0.0 && z.is_finite()) {
                return Err(CliError::Validation(format!("solver.z_max must be > 0 (got {z})")));
            }
        }
        let o = &self.oracle;
        if !(o.delta > 0.0) || !(o.z_lo < o.z_hi) || o.price_points < 2 {
            return Err(CliError::Validation(format!(
                "oracle needs delta > 0, z_lo < z_hi and >= 2 prices (got {}, {}, {}, {})",
                o.delta, o.z_lo, o.z_hi, o.price_points
            )));
        }
        Ok(params)
    }

    fn params(&self) -> Result<ModelParams, CliError> {
        let invalid = |e: &dyn std::fmt::Display| CliError::Validation(e.to_string());
        let demand = match self.demand {
            DemandSection::Linear { a, p_min, p_max } => DemandModel::linear(a, p_min, p_max),
            DemandSection::Hyperbolic { lambda0, lambda1, p_min, p_max } => {
                DemandModel::hyperbolic(lambda0, lambda1, p_min, p_max)
            }
        }
        .map_err(|e| invalid(&e))?;
        let cost = match self.cost {
            CostSection::Quadratic { c_plus, c_minus } => CostModel::quadratic(c_plus, c_minus),
            CostSection::Power { c_plus, c_minus, a_plus, a_minus } => CostModel::power(c_plus, c_minus, a_plus, a_minus),
        }
        .map_err(|e| invalid(&e))?;
        let m = &self.model;
        ModelParams::new(demand, cost, m.sigma, m.fixed_cost, m.unit_cost).map_err(|e| invalid(&e))
    }

    pub fn solver_options(&self) -> SolverOptions {
        let s = &self.solver;
        SolverOptions {
            rtol: s.rtol,
            atol: s.atol,
            max_step: s.max_step,
            z_max: s.z_max,
            truncation_factor: s.truncation_factor,
            truncation_tol: s.truncation_tol,
            ..SolverOptions::default()
        }
    }

    /// Simulation settings; `x0` defaults to `order_up_to` when given, else 0.
    pub fn sim_config(&self, order_up_to: Option<f64>) -> SimConfig {
        let s = &self.sim;
        SimConfig {
            x0: s.x0.or(order_up_to).unwrap_or(0.0),
            horizon: s.horizon,
            dt: s.dt,
            burn_in: s.burn_in,
            seed: s.seed,
            replications: s.replications,
            revenue_noise: s.revenue_noise,
        }
    }

    pub fn chain_spec(&self, params: &ModelParams) -> ChainSpec {
        let o = &self.oracle;
        ChainSpec::uniform(params, o.z_lo, o.z_hi, o.delta, o.price_points)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[demand]
family = "linear"
a = 10.0
p_min = 2.0
p_max = 6.0

[cost]
family = "quadratic"
c_plus = 1.0
c_minus = 1.0

[model]
sigma = 1.0
fixed_cost = 1.0
unit_cost = 1.0
"#;

    #[test]
    fn parses_minimal_config_with_defaults() {
        let cfg = RunConfig::from_toml(BASE).unwrap();
        assert_eq!(cfg.oracle.price_points, 81);
        assert_eq!(cfg.sim.replications, 32);
        assert_eq!(cfg.output.dir, PathBuf::from("out"));
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn hyperbolic_and_power_families() {
        let text = BASE
            .replace("family = \"linear\"\na = 10.0\np_min = 2.0", "family = \"hyperbolic\"\nlambda0 = 1.0\nlambda1 = 2.0\np_min = 1.0")
            .replace("p_max = 6.0", "p_max = 5.0")
            .replace("family = \"quadratic\"", "family = \"power\"\na_plus = 2.0\na_minus = 3.0");
        let cfg = RunConfig::from_toml(&text).unwrap();
        cfg.validate().unwrap();
        assert!(matches!(cfg.demand, DemandSection::Hyperbolic { .. }));
        assert!(matches!(cfg.cost, CostSection::Power { .. }));
    }

    #[test]
    fn zero_sigma_is_a_validation_error() {
        let err = RunConfig::from_toml(&BASE.replace("sigma = 1.0", "sigma = 0.0")).unwrap().validate().unwrap_err();
        assert!(matches!(err, CliError::Validation(_)));
        assert!(err.to_string().contains("sigma"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::from_toml(&format!("{BASE}\n[sim]\nhorizon_typo = 3.0\n")).unwrap_err();
        assert!(err.to_string().contains("horizon_typo"));
    }

    #[test]
    fn sim_section_is_validated() {
        let err = RunConfig::from_toml(&format!("{BASE}\n[sim]\nburn_in = 9000.0\n")).unwrap().validate().unwrap_err();
        assert!(err.to_string().contains("burn_in"));
    }
}
