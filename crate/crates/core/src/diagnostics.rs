//! Residual autocorrelation, portmanteau tests and fit statistics.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{FitResult, Params};
use crate::error::{Error, Result};
use crate::linalg;
use crate::special::chi2_sf;

/// Lags used by default in residual diagnostics.
pub const DEFAULT_LAGS: [usize; 4] = [5, 10, 15, 20];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Acf {
    /// Autocorrelations at lags `0..=max_lag`.
    pub rho: Vec<f64>,
    /// Half-width of the approximate 95% band, `1.96 / sqrt(T)`.
    pub band: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LjungBoxResult {
    pub lags: usize,
    pub statistic: f64,
    pub df: usize,
    pub pvalue: f64,
}

fn autocov(x: &[f64], max_lag: usize) -> Vec<f64> {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let d: Vec<f64> = x.iter().map(|v| v - mean).collect();
    (0..=max_lag)
        .map(|j| d[j..].iter().zip(&d[..n - j]).map(|(a, b)| a * b).sum::<f64>() / n as f64)
        .collect()
}

/// Sample autocorrelations of the demeaned series up to `max_lag < T/4`.
pub fn acf(residuals: &[f64], max_lag: usize) -> Result<Acf> {
    let n = residuals.len();
    if n == 0 || 4 * max_lag >= n {
        return Err(Error::InvalidArgument(format!("max lag {max_lag} must be below T/4 with T = {n}")));
    }
    let c = autocov(residuals, max_lag);
    if !(c[0] > 0.0) {
        return Err(Error::ConstantSeries);
    }
    Ok(Acf { rho: c.iter().map(|v| v / c[0]).collect(), band: 1.96 / (n as f64).sqrt() })
}

fn df_after(total: usize, n_params: usize) -> Result<usize> {
    let df = total as i64 - n_params as i64;
    if df < 1 {
        return Err(Error::NonPositiveDf(df));
    }
    Ok(df as usize)
}

/// `Q = T (T+2) sum_{j<=lags} rho_j^2 / (T - j)` against chi-square with
/// `lags - n_params` degrees of freedom.
pub fn ljung_box(residuals: &[f64], lags: usize, n_params: usize) -> Result<LjungBoxResult> {
    let df = df_after(lags, n_params)?;
    let n = residuals.len();
    if lags == 0 || lags >= n {
        return Err(Error::InvalidArgument(format!("{lags} lags with {n} observations")));
    }
    let c = autocov(residuals, lags);
    if !(c[0] > 0.0) {
        return Err(Error::ConstantSeries);
    }
    let nf = n as f64;
    let q = nf * (nf + 2.0) * (1..=lags).map(|j| (c[j] / c[0]).powi(2) / (nf - j as f64)).sum::<f64>();
    Ok(LjungBoxResult { lags, statistic: q, df, pvalue: chi2_sf(q, df as f64) })
}

/// Multivariate portmanteau on a T x K residual matrix:
/// `Q = T^2 sum_j (T-j)^-1 tr(C_j' C_0^-1 C_j C_0^-1)`, `df = K^2 lags - n_params`.
pub fn mv_portmanteau(residuals: &DMatrix<f64>, lags: usize, n_params: usize) -> Result<LjungBoxResult> {
    let (n, k) = residuals.shape();
    let df = df_after(k * k * lags, n_params)?;
    if lags == 0 || lags >= n {
        return Err(Error::InvalidArgument(format!("{lags} lags with {n} observations")));
    }
    let mean = residuals.row_mean();
    let d = DMatrix::from_fn(n, k, |t, i| residuals[(t, i)] - mean[i]);
    let nf = n as f64;
    let cov = |j: usize| -> DMatrix<f64> {
        // C_j = T^-1 sum_t u_t u_{t-j}'
        let a = d.rows(j, n - j);
        let b = d.rows(0, n - j);
        a.transpose() * b / nf
    };
    let c0 = cov(0);
    let c0_inv = linalg::spd_inverse(&c0).ok_or(Error::SingularC0)?;
    let mut q = 0.0;
    for j in 1..=lags {
        let cj = cov(j);
        let m = cj.transpose() * &c0_inv * &cj * &c0_inv;
        q += m.trace() / (nf - j as f64);
    }
    q *= nf * nf;
    Ok(LjungBoxResult { lags, statistic: q, df, pvalue: chi2_sf(q, df as f64) })
}

/// Squared Pearson correlation.
pub fn r_squared(observed: &[f64], fitted: &[f64]) -> Result<f64> {
    if observed.len() != fitted.len() || observed.len() < 2 {
        return Err(Error::InvalidArgument("r-squared needs two equal-length series of length >= 2".into()));
    }
    let n = observed.len() as f64;
    let mx = observed.iter().sum::<f64>() / n;
    let my = fitted.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in observed.iter().zip(fitted) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if !(sxx > 0.0 && syy > 0.0) {
        return Err(Error::ConstantSeries);
    }
    Ok((sxy * sxy / (sxx * syy)).min(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesDiagnostics {
    pub series: String,
    /// Short-run parameters charged against this series' degrees of freedom.
    pub n_params: usize,
    /// One entry per requested lag with positive degrees of freedom.
    pub ljung_box: Vec<LjungBoxResult>,
    pub acf: Acf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub lags: Vec<usize>,
    pub series: Vec<SeriesDiagnostics>,
    /// Joint portmanteau, multivariate fits only.
    #[serde(default)]
    pub portmanteau: Vec<LjungBoxResult>,
}

/// Residual diagnostics for a fit. Each univariate test is charged with the
/// parameters of its own equation (3, or `K + 2` in a K-variate fit); lags
/// leaving no degrees of freedom are omitted. The joint test is charged with
/// all `K(K+2)` short-run parameters.
pub fn diagnose(fit: &FitResult, lags: &[usize]) -> Result<DiagnosticsReport> {
    let k = fit.n_series();
    let per_eq = match fit.params {
        Params::Uni(_) => 3,
        Params::Vec(_) => k + 2,
    };
    let max_lag = lags.iter().copied().max().unwrap_or(0);
    let mut series = Vec::with_capacity(k);
    for j in 0..k {
        let r = fit.residual_series(j);
        let mut lb = Vec::new();
        for &l in lags {
            match ljung_box(&r, l, per_eq) {
                Ok(v) => lb.push(v),
                Err(Error::NonPositiveDf(_)) => {}
                Err(e) => return Err(e),
            }
        }
        let label = fit.labels.get(j).cloned().unwrap_or_else(|| format!("series{}", j + 1));
        series.push(SeriesDiagnostics { series: label, n_params: per_eq, ljung_box: lb, acf: acf(&r, max_lag.max(1))? });
    }
    let mut portmanteau = Vec::new();
    if let Params::Vec(p) = &fit.params {
        let m = DMatrix::from_fn(fit.n_obs(), k, |t, i| fit.residuals[t][i]);
        for &l in lags {
            portmanteau.push(mv_portmanteau(&m, l, p.n_params())?);
        }
    }
    Ok(DiagnosticsReport { lags: lags.to_vec(), series, portmanteau })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn acf_basics() {
        let alt: Vec<f64> = (0..4000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let a = acf(&alt, 3).unwrap();
        assert_eq!(a.rho[0], 1.0);
        assert!((a.rho[1] + 1.0).abs() < 1e-3);
        assert!(acf(&alt, 1000).is_err());
    }

    #[test]
    fn acf_matches_direct_sum() {
        let x: Vec<f64> = (0..300).map(|i| ((i * 37 % 101) as f64).sqrt()).collect();
        let a = acf(&x, 10).unwrap();
        let n = x.len();
        let m = x.iter().sum::<f64>() / n as f64;
        let den: f64 = x.iter().map(|v| (v - m).powi(2)).sum();
        for j in 0..=10 {
            let mut num = 0.0;
            for t in j..n {
                num += (x[t] - m) * (x[t - j] - m);
            }
            assert!((a.rho[j] - num / den).abs() < 1e-12);
        }
    }

    #[test]
    fn ljung_box_df_rules() {
        let x: Vec<f64> = (0..200).map(|i| ((i * 7919) % 97) as f64).collect();
        assert!(matches!(ljung_box(&x, 3, 3), Err(Error::NonPositiveDf(0))));
        let r = ljung_box(&x, 10, 3).unwrap();
        assert_eq!(r.df, 7);
        assert!(r.statistic >= 0.0 && (0.0..=1.0).contains(&r.pvalue));
    }

    #[test]
    fn portmanteau_k1_close_to_ljung_box() {
        let x: Vec<f64> = (0..20000).map(|i| (((i as u64 * 2654435761) % 1000) as f64) / 1000.0).collect();
        let m = DMatrix::from_column_slice(x.len(), 1, &x);
        let a = mv_portmanteau(&m, 10, 0).unwrap();
        let b = ljung_box(&x, 10, 0).unwrap();
        assert!((a.statistic - b.statistic).abs() <= 1e-3 * b.statistic.max(1.0));
    }

    #[test]
    fn r_squared_cases() {
        let x: Vec<f64> = (0..50).map(|i| (i as f64).sin() + 2.0).collect();
        assert!((r_squared(&x, &x).unwrap() - 1.0).abs() < 1e-14);
        let y: Vec<f64> = x.iter().map(|v| 3.0 - 2.0 * v).collect();
        assert!((r_squared(&x, &y).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(r_squared(&x, &vec![1.0; 50]), Err(Error::ConstantSeries)));
    }
}
