use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use memkit::ModelKind;
use serde::Deserialize;

/// Settings that may come from a JSON config file. Command-line flags take
/// precedence over file values.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub kind: Option<ModelKind>,
    pub inputs: Vec<PathBuf>,
    pub columns: Vec<String>,
    pub date_column: Option<String>,
    pub date_format: Option<String>,
    pub returns_column: Option<String>,
    /// column name -> `arvol` | `rkvol`
    pub convert: BTreeMap<String, String>,
    pub bandwidth_months: Option<f64>,
    pub annualization_days: Option<f64>,
    pub horizons: Option<usize>,
    pub lags: Option<Vec<usize>>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Conversion {
    AbsReturns,
    RealizedKernel,
}

pub fn parse_conversion(spec: &str) -> Result<(String, Conversion)> {
    let Some((col, how)) = spec.split_once('=') else {
        bail!("conversion '{spec}' must look like COLUMN=arvol or COLUMN=rkvol");
    };
    Ok((col.trim().to_string(), conversion_kind(how)?))
}

pub fn conversion_kind(how: &str) -> Result<Conversion> {
    match how.trim().to_ascii_lowercase().as_str() {
        "arvol" => Ok(Conversion::AbsReturns),
        "rkvol" => Ok(Conversion::RealizedKernel),
        other => bail!("unknown conversion '{other}' (expected arvol or rkvol)"),
    }
}

pub fn parse_lags(s: &str) -> std::result::Result<Vec<usize>, String> {
    let lags: std::result::Result<Vec<usize>, _> = s.split(',').map(|p| p.trim().parse::<usize>()).collect();
    match lags {
        Ok(v) if !v.is_empty() && v.iter().all(|l| *l > 0) => Ok(v),
        _ => Err(format!("'{s}' is not a comma-separated list of positive lags")),
    }
}

pub fn parse_positive(s: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("'{s}' must be a positive number")),
    }
}

pub fn parse_kind(s: &str) -> std::result::Result<ModelKind, String> {
    s.parse::<ModelKind>().map_err(|e| e.to_string())
}
