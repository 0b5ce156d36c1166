//! CSV loading and the unit conventions that turn raw inputs into volatility
//! measures in annualized percent.

use std::f64::consts::FRAC_PI_2;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{Date, ObservationSeries};
use crate::error::{Error, Result};

pub const DEFAULT_ANNUALIZATION_DAYS: f64 = 252.0;
pub const DEFAULT_DATE_FORMAT: &str = "%Y-%m-%d";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvLayout {
    pub path: PathBuf,
    pub date_column: String,
    pub value_column: String,
    pub return_column: Option<String>,
    pub date_format: String,
    pub delimiter: u8,
}

impl CsvLayout {
    /// Comma-separated file with a `date` column in ISO format.
    pub fn new(path: impl Into<PathBuf>, value_column: impl Into<String>) -> Self {
        CsvLayout {
            path: path.into(),
            date_column: "date".into(),
            value_column: value_column.into(),
            return_column: None,
            date_format: DEFAULT_DATE_FORMAT.into(),
            delimiter: b',',
        }
    }

    pub fn with_returns(mut self, column: impl Into<String>) -> Self {
        self.return_column = Some(column.into());
        self
    }
}

/// Dated values as read from disk, sorted by date.
#[derive(Debug, Clone, PartialEq)]
pub struct RawColumn {
    pub dates: Vec<Date>,
    pub values: Vec<f64>,
    pub returns: Option<Vec<f64>>,
}

impl RawColumn {
    /// Validate as an observation series. A missing return column yields an
    /// all-positive return path (no negative-return days).
    pub fn into_series(self, label: impl Into<String>) -> Result<ObservationSeries> {
        let n = self.values.len();
        let returns = self.returns.unwrap_or_else(|| vec![0.0; n]);
        ObservationSeries::new(label, self.dates, self.values, returns)
    }
}

/// Header names of a delimited file.
pub fn read_header(path: &Path, delimiter: u8) -> Result<Vec<String>> {
    let mut rdr = csv::ReaderBuilder::new().delimiter(delimiter).from_path(path).map_err(csv_err)?;
    Ok(rdr.headers().map_err(csv_err)?.iter().map(|s| s.trim().to_string()).collect())
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io.to_string()),
        other => Error::Io(format!("{other:?}")),
    }
}

/// Read one value column (and optionally a return column). Row numbers in
/// errors are 1-based line numbers of the file, the header being line 1.
pub fn load_csv(layout: &CsvLayout) -> Result<RawColumn> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(layout.delimiter)
        .trim(csv::Trim::All)
        .from_path(&layout.path)
        .map_err(csv_err)?;
    let header: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    let find = |name: &str| header.iter().position(|h| h == name).ok_or_else(|| Error::MissingColumn(name.into()));
    let di = find(&layout.date_column)?;
    let vi = find(&layout.value_column)?;
    let ri = layout.return_column.as_deref().map(find).transpose()?;

    let mut rows: Vec<(Date, f64, f64, usize)> = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let line = n + 2;
        let rec = rec.map_err(|e| Error::Parse { row: line, column: String::new(), message: e.to_string() })?;
        let cell = |i: usize, col: &str| -> Result<&str> {
            rec.get(i).ok_or_else(|| Error::Parse { row: line, column: col.into(), message: "missing cell".into() })
        };
        let num = |i: usize, col: &str| -> Result<f64> {
            let s = cell(i, col)?;
            s.parse::<f64>().map_err(|e| Error::Parse { row: line, column: col.into(), message: format!("'{s}': {e}") })
        };
        let ds = cell(di, &layout.date_column)?;
        let date = Date::parse_with(ds, &layout.date_format).map_err(|_| Error::Parse {
            row: line,
            column: layout.date_column.clone(),
            message: format!("'{ds}' does not match '{}'", layout.date_format),
        })?;
        let v = num(vi, &layout.value_column)?;
        let r = match (ri, &layout.return_column) {
            (Some(i), Some(col)) => num(i, col)?,
            _ => 0.0,
        };
        rows.push((date, v, r, line));
    }
    rows.sort_by_key(|r| r.0);
    if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::DuplicateDate(w[0].0.to_string()));
    }
    Ok(RawColumn {
        dates: rows.iter().map(|r| r.0).collect(),
        values: rows.iter().map(|r| r.1).collect(),
        returns: ri.map(|_| rows.iter().map(|r| r.2).collect()),
    })
}

fn abs_return_factor(annualization_days: f64) -> f64 {
    FRAC_PI_2.sqrt() * 100.0 * annualization_days.sqrt()
}

/// `|r_t| sqrt(pi/2) 100 sqrt(days)` with `r_t` kept as the return path.
pub fn absolute_returns_to_vol(
    label: impl Into<String>,
    dates: Vec<Date>,
    returns: Vec<f64>,
    annualization_days: f64,
) -> Result<ObservationSeries> {
    if let Some(i) = returns.iter().position(|r| !r.is_finite()) {
        return Err(Error::NonFinite { index: i });
    }
    let f = abs_return_factor(annualization_days);
    let values = returns.iter().map(|r| r.abs() * f).collect();
    ObservationSeries::new(label, dates, values, returns)
}

/// `100 sqrt(days RK_t)`.
pub fn realized_kernel_to_vol(
    label: impl Into<String>,
    dates: Vec<Date>,
    rk_variance: &[f64],
    returns: Vec<f64>,
    annualization_days: f64,
) -> Result<ObservationSeries> {
    if let Some(i) = rk_variance.iter().position(|v| *v < 0.0) {
        return Err(Error::NegativeValue { index: i, value: rk_variance[i] });
    }
    let values = rk_variance.iter().map(|v| 100.0 * (annualization_days * v).sqrt()).collect();
    ObservationSeries::new(label, dates, values, returns)
}

/// Inverse of the absolute-return scaling (recovers `|r_t|`).
pub fn vol_to_abs_returns(vol: &[f64], annualization_days: f64) -> Vec<f64> {
    let f = abs_return_factor(annualization_days);
    vol.iter().map(|v| v / f).collect()
}

/// Inverse of the realized-kernel scaling.
pub fn vol_to_realized_kernel(vol: &[f64], annualization_days: f64) -> Vec<f64> {
    vol.iter().map(|v| (v / 100.0).powi(2) / annualization_days).collect()
}

/// Write `date,<labels...>,return` in the layout `load_csv` reads.
pub fn write_panel_csv(path: &Path, labels: &[String], dates: &[Date], values: &DMatrix<f64>, returns: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header = vec!["date".to_string()];
    header.extend(labels.iter().cloned());
    header.push("return".into());
    w.write_record(&header).map_err(csv_err)?;
    for (t, d) in dates.iter().enumerate() {
        let mut rec = vec![d.to_string()];
        rec.extend((0..values.ncols()).map(|j| format!("{:?}", values[(t, j)])));
        rec.push(format!("{:?}", returns[t]));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
