//! Output files: the JSON summary, the stored policy and CSV helpers.
//!
//! Every number written here is rounded to 12 significant digits so that a
//! repeated run reproduces the files byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sspolicy::format::{fmt_sig, round_sig};
use sspolicy::{DemandModel, Policy, PriceRule};

use crate::CliError;

pub const SUMMARY_FILE: &str = "summary.json";
pub const CURVES_FILE: &str = "curves.csv";
pub const POLICY_FILE: &str = "policy.toml";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";

const DIGITS: usize = 12;

/// Rounds to the summary precision; non-finite values become `null`.
pub fn num(x: f64) -> Value {
    if x.is_finite() {
        Value::from(round_sig(x, DIGITS))
    } else {
        Value::Null
    }
}

/// Renders a number exactly as it appears in the summary.
pub fn show(x: f64) -> String {
    fmt_sig(x, DIGITS)
}

/// Run summary with a fixed key set; fields that do not apply are `null`.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct Summary {
    pub gamma: Option<f64>,
    pub s: Option<f64>,
    #[serde(rename = "S")]
    pub order_up_to: Option<f64>,
    pub z_star: Option<f64>,
    pub residual_max: Option<f64>,
    pub z_max_used: Option<f64>,
    pub breakpoints: Vec<f64>,
    pub checks: BTreeMap<String, Value>,
}

impl Summary {
    pub fn check(&mut self, key: &str, value: impl Into<Value>) {
        self.checks.insert(key.to_string(), value.into());
    }

    pub fn check_num(&mut self, key: &str, value: f64) {
        self.checks.insert(key.to_string(), num(value));
    }

    fn rounded(&self) -> Self {
        let r = |x: Option<f64>| x.filter(|v| v.is_finite()).map(|v| round_sig(v, DIGITS));
        Self {
            gamma: r(self.gamma),
            s: r(self.s),
            order_up_to: r(self.order_up_to),
            z_star: r(self.z_star),
            residual_max: r(self.residual_max),
            z_max_used: r(self.z_max_used),
            breakpoints: self.breakpoints.iter().map(|&b| round_sig(b, DIGITS)).collect(),
            checks: self.checks.clone(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf, CliError> {
        let path = dir.join(SUMMARY_FILE);
        let mut text = serde_json::to_string_pretty(&self.rounded()).map_err(|e| CliError::Other(e.to_string()))?;
        text.push('\n');
        fs::write(&path, text)?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| CliError::Other(format!("{}: {e}", path.display())))
    }
}

/// A stored `(s, S, p)` policy. The price comes either from a curve file
/// with `z` and `w` columns (path relative to the policy file) or is constant.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PolicyFile {
    pub s: f64,
    #[serde(rename = "S")]
    pub order_up_to: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub curve: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub constant_price: Option<f64>,
}

impl PolicyFile {
    pub fn write(&self, dir: &Path) -> Result<PathBuf, CliError> {
        let path = dir.join(POLICY_FILE);
        let rounded = Self {
            s: round_sig(self.s, DIGITS),
            order_up_to: round_sig(self.order_up_to, DIGITS),
            curve: self.curve.clone(),
            constant_price: self.constant_price.map(|p| round_sig(p, DIGITS)),
        };
        let text = toml::to_string(&rounded).map_err(|e| CliError::Other(e.to_string()))?;
        fs::write(&path, text)?;
        Ok(path)
    }

    /// Reads a policy file and builds the policy it describes.
    pub fn load(path: &Path, demand: &DemandModel) -> Result<Policy, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read policy {}: {e}", path.display())))?;
        let file: Self =
            toml::from_str(&text).map_err(|e| CliError::Validation(format!("policy {}: {e}", path.display())))?;
        let rule = match (&file.curve, file.constant_price) {
            (Some(curve), None) => {
                let base = path.parent().unwrap_or_else(|| Path::new("."));
                let (z, w) = read_curve(&base.join(curve))?;
                PriceRule::Table { z, w }
            }
            (None, Some(p)) => PriceRule::Constant(p),
            _ => {
                return Err(CliError::Validation(format!(
                    "policy {} needs exactly one of `curve` and `constant_price`",
                    path.display()
                )))
            }
        };
        Ok(Policy::new(file.s, file.order_up_to, rule, demand.clone())?)
    }
}

/// Reads the `z` and `w` columns of a curve CSV.
pub fn read_curve(path: &Path) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    let bad = |m: String| CliError::Validation(format!("curve {}: {m}", path.display()));
    let text = fs::read_to_string(path).map_err(|e| bad(e.to_string()))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or_else(|| bad("empty file".into()))?.split(',').collect();
    let col = |name: &str| header.iter().position(|h| h.trim() == name).ok_or_else(|| bad(format!("no `{name}` column")));
    let (zc, wc) = (col("z")?, col("w")?);
    let mut z = Vec::new();
    let mut w = Vec::new();
    for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let fields: Vec<&str> = line.split(',').collect();
        let field = |c: usize| -> Result<f64, CliError> {
            fields
                .get(c)
                .and_then(|f| f.trim().parse().ok())
                .ok_or_else(|| bad(format!("row {}: unreadable value", n + 2)))
        };
        z.push(field(zc)?);
        w.push(field(wc)?);
    }
    Ok((z, w))
}

/// Buffered writer for a file in `dir`.
pub fn create(dir: &Path, name: &str) -> Result<BufWriter<fs::File>, CliError> {
    Ok(BufWriter::new(fs::File::create(dir.join(name))?))
}

pub fn finish(mut out: BufWriter<fs::File>) -> Result<(), CliError> {
    out.flush()?;
    Ok(())
}
