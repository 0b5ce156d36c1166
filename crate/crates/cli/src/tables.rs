use memkit::data::{alpha_index, beta_index, gamma_index, Date};
use memkit::diagnostics::DiagnosticsReport;
use memkit::{FitResult, Params};
use serde::Serialize;

use crate::output::num;

#[derive(Debug, Clone, Serialize)]
pub struct EstimateRow {
    pub parameter: String,
    pub series: String,
    pub est: f64,
    pub std_error: Option<f64>,
    pub zstat: Option<f64>,
}

impl EstimateRow {
    fn with_se(parameter: String, series: &str, est: f64, se: f64) -> Self {
        let z = if se > 0.0 { Some(est / se) } else { None };
        EstimateRow { parameter, series: series.into(), est, std_error: Some(se), zstat: z }
    }

    fn plain(parameter: String, series: &str, est: f64) -> Self {
        EstimateRow { parameter, series: series.into(), est, std_error: None, zstat: None }
    }

    pub fn header() -> Vec<String> {
        ["parameter", "series", "est", "std_error", "zstat"].map(String::from).to_vec()
    }

    pub fn cells(&self) -> Vec<String> {
        vec![
            self.parameter.clone(),
            self.series.clone(),
            num(self.est),
            self.std_error.map(num).unwrap_or_default(),
            self.zstat.map(num).unwrap_or_default(),
        ]
    }
}

/// Persistence, news and asymmetry blocks per equation, then residual scale
/// and correlations, fit, and residual autocorrelation p-values.
pub fn estimate_rows(fit: &FitResult, diag: &DiagnosticsReport) -> Vec<EstimateRow> {
    let k = fit.n_series();
    let th = fit.theta();
    let se = fit.std_errors();
    let star = fit.persistence_with_se();
    let mut rows = Vec::new();
    for i in 0..k {
        let label = &fit.labels[i];
        match &fit.params {
            Params::Uni(_) => {
                rows.push(EstimateRow::with_se("beta*".into(), label, star[0].0, star[0].1));
                rows.push(EstimateRow::with_se("alpha".into(), label, th[1], se[1]));
                rows.push(EstimateRow::with_se("gamma".into(), label, th[2], se[2]));
            }
            Params::Vec(_) => {
                let n = i + 1;
                rows.push(EstimateRow::with_se(format!("beta*[{n},{n}]"), label, star[i].0, star[i].1));
                let b = beta_index(k, i);
                rows.push(EstimateRow::with_se(format!("beta[{n},{n}]"), label, th[b], se[b]));
                for j in 0..k {
                    let a = alpha_index(k, i, j);
                    rows.push(EstimateRow::with_se(format!("alpha[{n},{}]", j + 1), label, th[a], se[a]));
                }
                let g = gamma_index(k, i);
                rows.push(EstimateRow::with_se(format!("gamma[{n},{n}]"), label, th[g], se[g]));
            }
        }
    }
    let (sd, rho) = fit.sigma_and_rho();
    for (i, s) in sd.iter().enumerate() {
        rows.push(EstimateRow::plain("sigma".into(), &fit.labels[i], *s));
    }
    for i in 0..k {
        for j in i + 1..k {
            rows.push(EstimateRow::plain(format!("rho[{},{}]", i + 1, j + 1), &fit.labels[i], rho[(i, j)]));
        }
    }
    for (i, r) in fit.rsq.iter().enumerate() {
        rows.push(EstimateRow::plain("R2".into(), &fit.labels[i], *r));
    }
    for s in &diag.series {
        for lb in &s.ljung_box {
            rows.push(EstimateRow::plain(format!("LB({}) p-value", lb.lags), &s.series, lb.pvalue));
        }
    }
    for pm in &diag.portmanteau {
        rows.push(EstimateRow::plain(format!("Q({}) p-value", pm.lags), "joint", pm.pvalue));
    }
    rows
}

/// `date, x, mu, mu*tau, mu*tau*xi` per series.
pub fn component_table(fit: &FitResult, x: &nalgebra::DMatrix<f64>) -> (Vec<String>, Vec<Vec<String>>) {
    let k = fit.n_series();
    let mut header = vec!["date".to_string()];
    for l in &fit.labels {
        for part in ["x", "mu", "mu_tau", "mu_tau_xi"] {
            header.push(format!("{part}_{l}"));
        }
    }
    let rows = (0..fit.n_obs())
        .map(|t| {
            let mut r = vec![fit.dates[t].to_string()];
            for j in 0..k {
                let mt = fit.mu[j] * fit.tau[t];
                r.extend([num(x[(t, j)]), num(fit.mu[j]), num(mt), num(mt * fit.xi[t][j])]);
            }
            r
        })
        .collect();
    (header, rows)
}

pub fn residual_table(fit: &FitResult) -> (Vec<String>, Vec<Vec<String>>) {
    let mut header = vec!["date".to_string()];
    header.extend(fit.labels.iter().cloned());
    let rows = fit
        .residuals
        .iter()
        .zip(&fit.dates)
        .map(|(r, d): (&Vec<f64>, &Date)| {
            let mut row = vec![d.to_string()];
            row.extend(r.iter().map(|v| num(*v)));
            row
        })
        .collect();
    (header, rows)
}
