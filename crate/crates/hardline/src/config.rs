//! Run configuration files. TOML or JSON, chosen by extension; unknown keys
//! are rejected. Command-line flags override file values.

use std::path::{Path, PathBuf};

use hardline_core::measure::{ChartBox, Thresholds};
use hardline_core::ToleranceConfig;
use serde::Deserialize;

use crate::battery::BumpSpec;
use crate::error::CliError;

/// A scalar or a list, for `t = 1.5` as well as `t = [0.5, 1.5]`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

impl OneOrMany {
    pub fn into_vec(self) -> Vec<f64> {
        match self {
            Self::One(x) => vec![x],
            Self::Many(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionConfig {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl RegionConfig {
    pub fn to_box(&self) -> Result<ChartBox, CliError> {
        Ok(ChartBox::new(self.lo.clone(), self.hi.clone())?)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceSection {
    pub membership: Option<f64>,
    pub identity: Option<f64>,
    pub fd_step: Option<f64>,
}

impl ToleranceSection {
    pub fn build(&self) -> Result<ToleranceConfig, CliError> {
        let d = ToleranceConfig::default();
        Ok(ToleranceConfig::new(
            self.membership.unwrap_or(d.tol_membership),
            self.identity.unwrap_or(d.tol_identity),
            self.fd_step.unwrap_or(d.fd_step),
        )?)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdSection {
    pub invariant: Option<f64>,
    pub violated: Option<f64>,
}

impl ThresholdSection {
    pub fn build(&self) -> Result<Thresholds, CliError> {
        let d = Thresholds::default();
        let t = Thresholds { invariant: self.invariant.unwrap_or(d.invariant), violated: self.violated.unwrap_or(d.violated) };
        if !(t.invariant.is_finite() && t.violated.is_finite() && 0.0 <= t.invariant && t.invariant < t.violated) {
            return Err(CliError::usage("thresholds must satisfy 0 <= invariant < violated"));
        }
        Ok(t)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub map: Option<String>,
    pub measure: Option<String>,
    pub x: Option<Vec<f64>>,
    pub v: Option<Vec<f64>>,
    pub t: Option<OneOrMany>,
    pub n: Option<u64>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub dims: Option<Vec<usize>>,
    pub region: Option<RegionConfig>,
    pub delta_x: Option<f64>,
    pub delta_u: Option<f64>,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub tolerance: ToleranceSection,
    #[serde(default)]
    pub thresholds: ThresholdSection,
    pub battery: Option<Vec<BumpSpec>>,
}

impl RunConfig {
    pub fn parse(text: &str, json: bool) -> Result<Self, CliError> {
        let parsed = if json {
            serde_json::from_str(text).map_err(|e| e.to_string())
        } else {
            toml::from_str(text).map_err(|e| e.to_string())
        };
        parsed.map_err(|e| CliError::usage(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::parse(&text, true),
            Some("toml") => Self::parse(&text, false),
            _ => Err(CliError::usage(format!("{}: config must end in .toml or .json", path.display()))),
        }
    }
}
