//! Typed series, panels, recursion parameters and fit outputs.

use std::collections::HashSet;
use std::fmt;

use chrono::{Datelike, NaiveDate};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg;

/// Minimum number of observations accepted for a series or panel.
pub const MIN_OBS: usize = 50;

/// Calendar date stored as a day ordinal (days since 0001-01-01, CE).
/// Serialized as an ISO-8601 `YYYY-MM-DD` string.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Date(i32);

impl Date {
    pub fn from_ordinal(days: i32) -> Self {
        Date(days)
    }

    pub fn ordinal(self) -> i32 {
        self.0
    }

    pub fn from_naive(d: NaiveDate) -> Self {
        Date(d.num_days_from_ce())
    }

    pub fn to_naive(self) -> NaiveDate {
        NaiveDate::from_num_days_from_ce_opt(self.0).expect("ordinal within chrono range")
    }

    pub fn parse_iso(s: &str) -> Result<Self> {
        Self::parse_with(s, "%Y-%m-%d")
    }

    pub fn parse_with(s: &str, fmt: &str) -> Result<Self> {
        NaiveDate::parse_from_str(s.trim(), fmt)
            .map(Self::from_naive)
            .map_err(|e| Error::InvalidArgument(format!("bad date '{s}': {e}")))
    }

    /// Consecutive dates starting at `start`, one per calendar day. Used for
    /// synthetic data.
    pub fn sequence(start: Date, n: usize) -> Vec<Date> {
        (0..n as i32).map(|i| Date(start.0 + i)).collect()
    }
}

impl fmt::Display for Date {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_naive().format("%Y-%m-%d"))
    }
}

impl Serialize for Date {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Date {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Date::parse_iso(&s).map_err(serde::de::Error::custom)
    }
}

/// One dated non-negative volatility measure plus the market return used for
/// the negative-return indicator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSeries")]
pub struct ObservationSeries {
    label: String,
    dates: Vec<Date>,
    values: Vec<f64>,
    returns: Vec<f64>,
}

#[derive(Deserialize)]
struct RawSeries {
    label: String,
    dates: Vec<Date>,
    values: Vec<f64>,
    returns: Vec<f64>,
}

impl TryFrom<RawSeries> for ObservationSeries {
    type Error = Error;
    fn try_from(r: RawSeries) -> Result<Self> {
        ObservationSeries::new(r.label, r.dates, r.values, r.returns)
    }
}

impl ObservationSeries {
    pub fn new(
        label: impl Into<String>,
        dates: Vec<Date>,
        values: Vec<f64>,
        returns: Vec<f64>,
    ) -> Result<Self> {
        if dates.len() != values.len() || returns.len() != values.len() {
            return Err(Error::MismatchedReturns(format!(
                "{} dates, {} values, {} returns",
                dates.len(),
                values.len(),
                returns.len()
            )));
        }
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { index: i });
            }
            if v < 0.0 {
                return Err(Error::NegativeValue { index: i, value: v });
            }
        }
        if let Some(i) = returns.iter().position(|r| !r.is_finite()) {
            return Err(Error::NonFinite { index: i });
        }
        if let Some(i) = dates.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::UnorderedDates { index: i + 1 });
        }
        Ok(ObservationSeries { label: label.into(), dates, values, returns })
    }

    pub fn label(&self) -> &str {
        &self.label
    }
    pub fn dates(&self) -> &[Date] {
        &self.dates
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn returns(&self) -> &[f64] {
        &self.returns
    }
    pub fn len(&self) -> usize {
        self.values.len()
    }
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// `D_t = 1` when the return is strictly negative.
    pub fn neg_indicator(&self) -> Vec<f64> {
        neg_indicator(&self.returns)
    }
}

pub fn neg_indicator(returns: &[f64]) -> Vec<f64> {
    returns.iter().map(|&r| if r < 0.0 { 1.0 } else { 0.0 }).collect()
}

/// K co-dated series sharing one date index and one return series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedPanel {
    labels: Vec<String>,
    dates: Vec<Date>,
    /// T x K
    values: DMatrix<f64>,
    returns: Vec<f64>,
}

impl AlignedPanel {
    pub fn labels(&self) -> &[String] {
        &self.labels
    }
    pub fn dates(&self) -> &[Date] {
        &self.dates
    }
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }
    pub fn returns(&self) -> &[f64] {
        &self.returns
    }
    pub fn n_obs(&self) -> usize {
        self.values.nrows()
    }
    pub fn n_series(&self) -> usize {
        self.values.ncols()
    }
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.column(j).iter().copied().collect()
    }
    pub fn neg_indicator(&self) -> Vec<f64> {
        neg_indicator(&self.returns)
    }
    pub fn means(&self) -> Vec<f64> {
        (0..self.n_series()).map(|j| self.values.column(j).mean()).collect()
    }

    /// Extract one column as a standalone series.
    pub fn series(&self, j: usize) -> ObservationSeries {
        ObservationSeries {
            label: self.labels[j].clone(),
            dates: self.dates.clone(),
            values: self.column(j),
            returns: self.returns.clone(),
        }
    }
}

/// Align a list of series on the intersection of their date indices. The
/// return series of the panel comes from the first input.
pub fn validate_panel(series: &[ObservationSeries]) -> Result<AlignedPanel> {
    let first = series.first().ok_or(Error::NoSeries)?;
    for s in series {
        if s.len() < MIN_OBS {
            return Err(Error::TooShort { label: s.label.clone(), len: s.len(), min: MIN_OBS });
        }
    }
    let mut common: HashSet<Date> = first.dates.iter().copied().collect();
    for s in &series[1..] {
        let here: HashSet<Date> = s.dates.iter().copied().collect();
        common.retain(|d| here.contains(d));
    }
    let mut dates: Vec<Date> = common.into_iter().collect();
    dates.sort_unstable();
    if dates.len() < MIN_OBS {
        return Err(Error::EmptyIntersection { len: dates.len(), min: MIN_OBS });
    }
    let t = dates.len();
    let k = series.len();
    let mut values = DMatrix::zeros(t, k);
    let mut returns = Vec::with_capacity(t);
    for (j, s) in series.iter().enumerate() {
        // dates are strictly increasing in every series, so a merge walk works
        let mut pos = 0;
        for (row, d) in dates.iter().enumerate() {
            while s.dates[pos] < *d {
                pos += 1;
            }
            values[(row, j)] = s.values[pos];
            if j == 0 {
                returns.push(s.returns[pos]);
            }
        }
    }
    Ok(AlignedPanel {
        labels: series.iter().map(|s| s.label.clone()).collect(),
        dates,
        values,
        returns,
    })
}

/// Build a panel directly from a T x K matrix (used by simulation).
pub fn panel_from_matrix(
    labels: Vec<String>,
    dates: Vec<Date>,
    values: DMatrix<f64>,
    returns: Vec<f64>,
) -> Result<AlignedPanel> {
    if labels.len() != values.ncols() || dates.len() != values.nrows() || returns.len() != dates.len() {
        return Err(Error::MismatchedReturns("panel dimensions disagree".into()));
    }
    for j in 0..values.ncols() {
        ObservationSeries::new(labels[j].clone(), dates.clone(), values.column(j).iter().copied().collect(), returns.clone())?;
    }
    Ok(AlignedPanel { labels, dates, values, returns })
}

/// Upper bound on persistence accepted by the constructors.
pub const MAX_PERSISTENCE: f64 = 1.0;

/// Short-run coefficients of the univariate recursion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawUni")]
pub struct UniParams {
    beta1: f64,
    alpha1: f64,
    gamma1: f64,
}

#[derive(Deserialize)]
struct RawUni {
    beta1: f64,
    alpha1: f64,
    gamma1: f64,
}

impl TryFrom<RawUni> for UniParams {
    type Error = Error;
    fn try_from(r: RawUni) -> Result<Self> {
        UniParams::new(r.beta1, r.alpha1, r.gamma1)
    }
}

impl UniParams {
    pub fn new(beta1: f64, alpha1: f64, gamma1: f64) -> Result<Self> {
        if !(beta1.is_finite() && alpha1.is_finite() && gamma1.is_finite()) {
            return Err(Error::NonStationary("non-finite coefficient".into()));
        }
        let p = UniParams { beta1, alpha1, gamma1 };
        let star = p.persistence();
        if !(0.0..MAX_PERSISTENCE).contains(&star) {
            return Err(Error::NonStationary(format!("persistence {star} outside [0, 1)")));
        }
        Ok(p)
    }

    /// Build from persistence, alpha and gamma.
    pub fn from_persistence(beta1_star: f64, alpha1: f64, gamma1: f64) -> Result<Self> {
        Self::new(beta1_star - alpha1 - 0.5 * gamma1, alpha1, gamma1)
    }

    pub fn from_theta(theta: &[f64]) -> Result<Self> {
        match theta {
            [b, a, g] => Self::new(*b, *a, *g),
            _ => Err(Error::InvalidArgument(format!("expected 3 parameters, got {}", theta.len()))),
        }
    }

    pub fn beta1(&self) -> f64 {
        self.beta1
    }
    pub fn alpha1(&self) -> f64 {
        self.alpha1
    }
    pub fn gamma1(&self) -> f64 {
        self.gamma1
    }

    /// `beta1 + alpha1 + gamma1 / 2`
    pub fn persistence(&self) -> f64 {
        self.beta1 + self.alpha1 + 0.5 * self.gamma1
    }

    pub fn intercept(&self) -> f64 {
        1.0 - self.persistence()
    }

    /// `(beta1, alpha1, gamma1)`
    pub fn theta(&self) -> [f64; 3] {
        [self.beta1, self.alpha1, self.gamma1]
    }
}

/// Short-run coefficients of the K-variate recursion: diagonal `beta1` and
/// `gamma1`, full `alpha1`.
///
/// The flat parameter vector is laid out equation by equation: for row `i`,
/// `beta1[i,i]`, `alpha1[i,0..K]`, `gamma1[i,i]`, so equation `i` occupies
/// positions `i*(K+2) .. (i+1)*(K+2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawVec")]
pub struct VecParams {
    beta1: Vec<f64>,
    alpha1: DMatrix<f64>,
    gamma1: Vec<f64>,
}

#[derive(Deserialize)]
struct RawVec {
    beta1: Vec<f64>,
    alpha1: DMatrix<f64>,
    gamma1: Vec<f64>,
}

impl TryFrom<RawVec> for VecParams {
    type Error = Error;
    fn try_from(r: RawVec) -> Result<Self> {
        VecParams::new(r.beta1, r.alpha1, r.gamma1)
    }
}

impl VecParams {
    /// `beta1` and `gamma1` are the diagonals of the corresponding matrices.
    pub fn new(beta1: Vec<f64>, alpha1: DMatrix<f64>, gamma1: Vec<f64>) -> Result<Self> {
        let k = beta1.len();
        if k == 0 || gamma1.len() != k || alpha1.nrows() != k || alpha1.ncols() != k {
            return Err(Error::InvalidArgument("inconsistent VecParams dimensions".into()));
        }
        if beta1.iter().chain(gamma1.iter()).chain(alpha1.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonStationary("non-finite coefficient".into()));
        }
        let p = VecParams { beta1, alpha1, gamma1 };
        let rho = linalg::spectral_radius(&p.persistence());
        if !(rho < MAX_PERSISTENCE) {
            return Err(Error::NonStationary(format!("spectral radius {rho} >= 1")));
        }
        Ok(p)
    }

    /// Rejects matrices with non-zero off-diagonal entries in `beta1`/`gamma1`.
    pub fn from_matrices(beta1: &DMatrix<f64>, alpha1: DMatrix<f64>, gamma1: &DMatrix<f64>) -> Result<Self> {
        let k = alpha1.nrows();
        for m in [beta1, gamma1] {
            if m.nrows() != k || m.ncols() != k {
                return Err(Error::InvalidArgument("inconsistent VecParams dimensions".into()));
            }
            for i in 0..k {
                for j in 0..k {
                    if i != j && m[(i, j)] != 0.0 {
                        return Err(Error::InvalidArgument("beta1 and gamma1 must be diagonal".into()));
                    }
                }
            }
        }
        Self::new(beta1.diagonal().iter().copied().collect(), alpha1, gamma1.diagonal().iter().copied().collect())
    }

    pub fn dim(&self) -> usize {
        self.beta1.len()
    }

    pub fn n_params(&self) -> usize {
        n_vec_params(self.dim())
    }

    pub fn beta1_diag(&self) -> &[f64] {
        &self.beta1
    }
    pub fn gamma1_diag(&self) -> &[f64] {
        &self.gamma1
    }
    pub fn alpha1(&self) -> &DMatrix<f64> {
        &self.alpha1
    }
    pub fn beta1(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(&self.beta1))
    }
    pub fn gamma1(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(&self.gamma1))
    }

    /// `beta1 + alpha1 + gamma1 / 2`
    pub fn persistence(&self) -> DMatrix<f64> {
        let mut m = self.alpha1.clone();
        for i in 0..self.dim() {
            m[(i, i)] += self.beta1[i] + 0.5 * self.gamma1[i];
        }
        m
    }

    /// Diagonal entries of the persistence matrix, one per equation.
    pub fn persistence_diag(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.beta1[i] + self.alpha1[(i, i)] + 0.5 * self.gamma1[i]).collect()
    }

    pub fn spectral_radius(&self) -> f64 {
        linalg::spectral_radius(&self.persistence())
    }

    /// `1 - beta1_star * 1`, the intercept vector.
    pub fn intercept(&self) -> Vec<f64> {
        let p = self.persistence();
        (0..self.dim()).map(|i| 1.0 - p.row(i).sum()).collect()
    }

    pub fn theta(&self) -> Vec<f64> {
        let k = self.dim();
        let mut out = Vec::with_capacity(self.n_params());
        for i in 0..k {
            out.push(self.beta1[i]);
            for j in 0..k {
                out.push(self.alpha1[(i, j)]);
            }
            out.push(self.gamma1[i]);
        }
        out
    }

    pub fn from_theta(k: usize, theta: &[f64]) -> Result<Self> {
        if theta.len() != n_vec_params(k) {
            return Err(Error::InvalidArgument(format!(
                "expected {} parameters, got {}",
                n_vec_params(k),
                theta.len()
            )));
        }
        let mut beta1 = vec![0.0; k];
        let mut gamma1 = vec![0.0; k];
        let mut alpha1 = DMatrix::zeros(k, k);
        for i in 0..k {
            let block = &theta[i * (k + 2)..(i + 1) * (k + 2)];
            beta1[i] = block[0];
            for j in 0..k {
                alpha1[(i, j)] = block[1 + j];
            }
            gamma1[i] = block[k + 1];
        }
        Self::new(beta1, alpha1, gamma1)
    }

    /// Names in parameter-vector order, 1-based: `beta[i,i]`, `alpha[i,j]`, `gamma[i,i]`.
    pub fn param_names(k: usize) -> Vec<String> {
        let mut out = Vec::with_capacity(n_vec_params(k));
        for i in 1..=k {
            out.push(format!("beta[{i},{i}]"));
            for j in 1..=k {
                out.push(format!("alpha[{i},{j}]"));
            }
            out.push(format!("gamma[{i},{i}]"));
        }
        out
    }
}

pub fn n_vec_params(k: usize) -> usize {
    k * (k + 2)
}

/// Position of `beta1[i,i]` in the flat parameter vector.
pub fn beta_index(k: usize, i: usize) -> usize {
    i * (k + 2)
}

/// Position of `alpha1[i,j]` in the flat parameter vector.
pub fn alpha_index(k: usize, i: usize, j: usize) -> usize {
    i * (k + 2) + 1 + j
}

/// Position of `gamma1[i,i]` in the flat parameter vector.
pub fn gamma_index(k: usize, i: usize) -> usize {
    i * (k + 2) + k + 1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Mem,
    SpMem,
    VMem,
    SpvMem,
}

impl ModelKind {
    pub fn is_semiparametric(self) -> bool {
        matches!(self, ModelKind::SpMem | ModelKind::SpvMem)
    }
    pub fn is_multivariate(self) -> bool {
        matches!(self, ModelKind::VMem | ModelKind::SpvMem)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Mem => "mem",
            ModelKind::SpMem => "spmem",
            ModelKind::VMem => "vmem",
            ModelKind::SpvMem => "spvmem",
        })
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mem" => Ok(ModelKind::Mem),
            "spmem" => Ok(ModelKind::SpMem),
            "vmem" => Ok(ModelKind::VMem),
            "spvmem" => Ok(ModelKind::SpvMem),
            other => Err(Error::InvalidArgument(format!("unknown model kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Params {
    Uni(UniParams),
    Vec(VecParams),
}

impl Params {
    pub fn theta(&self) -> Vec<f64> {
        match self {
            Params::Uni(p) => p.theta().to_vec(),
            Params::Vec(p) => p.theta(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Params::Uni(_) => 1,
            Params::Vec(p) => p.dim(),
        }
    }

    /// Per-equation persistence `beta*[i,i]`.
    pub fn persistence_diag(&self) -> Vec<f64> {
        match self {
            Params::Uni(p) => vec![p.persistence()],
            Params::Vec(p) => p.persistence_diag(),
        }
    }

    pub fn param_names(&self) -> Vec<String> {
        match self {
            Params::Uni(_) => vec!["beta1".into(), "alpha1".into(), "gamma1".into()],
            Params::Vec(p) => VecParams::param_names(p.dim()),
        }
    }
}

/// Estimates, uncertainty, component paths and residuals of one fit.
///
/// Matrices are stored as nested row vectors. `xi` and `residuals` are T x K.
/// `avar` is the estimated covariance of the parameter estimates (already
/// scaled by 1/T), in parameter-vector order. `sigma2` is K x K (1 x 1 for
/// univariate fits).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: ModelKind,
    pub labels: Vec<String>,
    pub dates: Vec<Date>,
    pub params: Params,
    pub mu: Vec<f64>,
    pub tau: Vec<f64>,
    pub xi: Vec<Vec<f64>>,
    pub residuals: Vec<Vec<f64>>,
    pub sigma2: Vec<Vec<f64>>,
    pub avar: Vec<Vec<f64>>,
    pub rsq: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub outer_iterations: usize,
    pub bandwidth_days: Option<usize>,
    /// Mean criterion vector `T^-1 sum_t A_t (eps_t - 1)` at the estimate.
    pub criterion: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<crate::diagnostics::DiagnosticsReport>,
}

impl FitResult {
    pub fn n_obs(&self) -> usize {
        self.tau.len()
    }

    pub fn n_series(&self) -> usize {
        self.mu.len()
    }

    pub fn theta(&self) -> Vec<f64> {
        self.params.theta()
    }

    pub fn std_errors(&self) -> Vec<f64> {
        (0..self.avar.len()).map(|i| self.avar[i][i].max(0.0).sqrt()).collect()
    }

    /// Residual path of series `j`.
    pub fn residual_series(&self, j: usize) -> Vec<f64> {
        self.residuals.iter().map(|r| r[j]).collect()
    }

    pub fn xi_series(&self, j: usize) -> Vec<f64> {
        self.xi.iter().map(|r| r[j]).collect()
    }

    /// Fitted conditional mean `mu_j * tau_t * xi_{t,j}`.
    pub fn fitted_series(&self, j: usize) -> Vec<f64> {
        self.xi.iter().zip(&self.tau).map(|(x, t)| self.mu[j] * t * x[j]).collect()
    }

    /// Persistence estimate `beta*[i,i]` with its standard error, by equation.
    pub fn persistence_with_se(&self) -> Vec<(f64, f64)> {
        let k = self.n_series();
        let p = self.params.persistence_diag();
        (0..k)
            .map(|i| {
                let idx: [(usize, f64); 3] = match self.params {
                    Params::Uni(_) => [(0, 1.0), (1, 1.0), (2, 0.5)],
                    Params::Vec(_) => {
                        [(beta_index(k, i), 1.0), (alpha_index(k, i, i), 1.0), (gamma_index(k, i), 0.5)]
                    }
                };
                let mut var = 0.0;
                for &(a, ca) in &idx {
                    for &(b, cb) in &idx {
                        var += ca * cb * self.avar[a][b];
                    }
                }
                (p[i], var.max(0.0).sqrt())
            })
            .collect()
    }

    /// Residual standard deviations and correlations from `sigma2`.
    pub fn sigma_and_rho(&self) -> (Vec<f64>, DMatrix<f64>) {
        let k = self.sigma2.len();
        let sd: Vec<f64> = (0..k).map(|i| self.sigma2[i][i].sqrt()).collect();
        let rho = DMatrix::from_fn(k, k, |i, j| if i == j { 1.0 } else { (self.sigma2[i][j] / (sd[i] * sd[j])).clamp(-1.0, 1.0) });
        (sd, rho)
    }
}

pub(crate) fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}
