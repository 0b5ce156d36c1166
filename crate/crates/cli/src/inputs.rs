use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use memkit::data::validate_panel;
use memkit::ingest::{self, CsvLayout};
use memkit::{AlignedPanel, ObservationSeries};

use crate::config::Conversion;

/// Where and how to read the observation series.
#[derive(Debug, Clone)]
pub struct DataSpec {
    pub inputs: Vec<PathBuf>,
    /// Empty means every column other than the date and return columns.
    pub columns: Vec<String>,
    pub date_column: String,
    pub date_format: String,
    pub returns_column: String,
    pub convert: BTreeMap<String, Conversion>,
    pub annualization_days: f64,
}

fn layout(spec: &DataSpec, path: &PathBuf, column: &str, with_returns: bool) -> CsvLayout {
    let mut l = CsvLayout::new(path, column);
    l.date_column = spec.date_column.clone();
    l.date_format = spec.date_format.clone();
    if with_returns {
        l.return_column = Some(spec.returns_column.clone());
    }
    l
}

/// Resolve the requested columns across the input files (first file that
/// has a column wins), apply unit conversions and align on common dates.
pub fn load_panel(spec: &DataSpec) -> Result<AlignedPanel> {
    if spec.inputs.is_empty() {
        bail!("no --input given");
    }
    let mut headers = Vec::with_capacity(spec.inputs.len());
    for p in &spec.inputs {
        if !p.is_file() {
            bail!("input file {} does not exist", p.display());
        }
        headers.push(ingest::read_header(p, b',').with_context(|| format!("reading {}", p.display()))?);
    }
    let columns: Vec<String> = if spec.columns.is_empty() {
        let mut cols = Vec::new();
        for h in &headers {
            for c in h {
                if *c != spec.date_column && *c != spec.returns_column && !cols.contains(c) {
                    cols.push(c.clone());
                }
            }
        }
        cols
    } else {
        spec.columns.clone()
    };
    if columns.is_empty() {
        bail!("no value columns found in the inputs");
    }
    let mut series: Vec<ObservationSeries> = Vec::with_capacity(columns.len());
    for col in &columns {
        let Some(i) = headers.iter().position(|h| h.contains(col)) else {
            bail!("column '{col}' not found in any input");
        };
        let path = &spec.inputs[i];
        let has_returns = headers[i].contains(&spec.returns_column);
        let raw = ingest::load_csv(&layout(spec, path, col, has_returns))
            .with_context(|| format!("loading column '{col}' from {}", path.display()))?;
        let s = match spec.convert.get(col) {
            None => raw.into_series(col.clone())?,
            Some(Conversion::AbsReturns) => {
                // the column itself holds the daily returns
                ingest::absolute_returns_to_vol(col.clone(), raw.dates, raw.values, spec.annualization_days)?
            }
            Some(Conversion::RealizedKernel) => {
                let n = raw.values.len();
                let returns = raw.returns.unwrap_or_else(|| vec![0.0; n]);
                ingest::realized_kernel_to_vol(col.clone(), raw.dates, &raw.values, returns, spec.annualization_days)?
            }
        };
        series.push(s);
    }
    Ok(validate_panel(&series)?)
}
