//! Model drivers: the base fits on raw series, and the alternation between
//! kernel smoothing of the low-frequency component and GMM estimation of
//! the short-run component.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{AlignedPanel, FitResult, ModelKind, ObservationSeries};
use crate::error::{Error, Result};
use crate::mem::{self, MemEstimate, MemOptions};
use crate::smoother::{self, SmootherConfig};
use crate::vmem::{self, VEstimate, VMemOptions};

pub const MIN_SP_OBS: usize = 300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpFitOptions {
    pub smoother: SmootherConfig,
    pub max_outer_iter: usize,
    /// Threshold on the larger of the sup-norm relative change in the low
    /// frequency path and the change in the parameters (relative for
    /// entries above one in magnitude, absolute otherwise).
    pub outer_tol: f64,
    /// Squared extrapolation of the low-frequency path between plain steps.
    #[serde(default = "default_accelerate")]
    pub accelerate: bool,
    #[serde(default)]
    pub mem: MemOptions,
    #[serde(default)]
    pub vmem: VMemOptions,
}

impl SpFitOptions {
    pub fn new(smoother: SmootherConfig) -> Self {
        SpFitOptions {
            smoother,
            max_outer_iter: 50,
            outer_tol: 1e-5,
            accelerate: true,
            mem: MemOptions::default(),
            vmem: VMemOptions::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.max_outer_iter == 0 {
            return Err(Error::InvalidArgument("max_outer_iter must be at least 1".into()));
        }
        if !(self.outer_tol > 0.0) {
            return Err(Error::InvalidArgument("outer_tol must be positive".into()));
        }
        Ok(())
    }
}

fn default_accelerate() -> bool {
    true
}

fn tau_change(new: &[f64], old: &[f64]) -> f64 {
    new.iter().zip(old).map(|(a, b)| (a - b).abs() / b.abs()).fold(0.0, f64::max)
}

fn theta_change(new: &[f64], old: &[f64]) -> f64 {
    new.iter().zip(old).map(|(a, b)| (a - b).abs() / b.abs().max(1.0)).fold(0.0, f64::max)
}

fn label_fit(mut fit: FitResult, labels: Vec<String>, dates: Vec<crate::data::Date>) -> FitResult {
    fit.labels = labels;
    fit.dates = dates;
    fit
}

/// Base model on a raw series: `mu` is the sample mean and `tau = 1`.
pub fn fit_base_mem(series: &ObservationSeries, opts: &MemOptions) -> Result<FitResult> {
    let mu = positive_mean(series.values())?;
    let x_xi: Vec<f64> = series.values().iter().map(|v| v / mu).collect();
    let est = mem::estimate(&x_xi, &series.neg_indicator(), opts)?;
    let fit = mem::assemble_fit(est, series.values(), mu, vec![1.0; series.len()], ModelKind::Mem);
    Ok(label_fit(fit, vec![series.label().to_string()], series.dates().to_vec()))
}

/// Base vector model on a raw panel: per-series sample means and `tau = 1`.
pub fn fit_base_vmem(panel: &AlignedPanel, opts: &VMemOptions) -> Result<FitResult> {
    let mu = panel_means(panel)?;
    let x = panel.values();
    let x_xi = DMatrix::from_fn(x.nrows(), x.ncols(), |t, j| x[(t, j)] / mu[j]);
    let est = vmem::vestimate(&x_xi, &panel.neg_indicator(), opts)?;
    let fit = vmem::assemble_vfit(est, x, mu, vec![1.0; x.nrows()], ModelKind::VMem);
    Ok(label_fit(fit, panel.labels().to_vec(), panel.dates().to_vec()))
}

fn positive_mean(v: &[f64]) -> Result<f64> {
    let m = v.iter().sum::<f64>() / v.len().max(1) as f64;
    if !(m > 0.0) {
        return Err(Error::ConstantSeries);
    }
    Ok(m)
}

fn panel_means(panel: &AlignedPanel) -> Result<Vec<f64>> {
    let mu = panel.means();
    if let Some(j) = mu.iter().position(|m| !(*m > 0.0)) {
        return Err(Error::ZeroVariance { index: j });
    }
    Ok(mu)
}

fn inner_mem(x_xi: &[f64], neg: &[f64], opts: &MemOptions, warm: Option<&MemEstimate>) -> Result<MemEstimate> {
    let warm_opts = MemOptions { start: warm.map(|e| e.params).or(opts.start), ..*opts };
    match mem::estimate(x_xi, neg, &warm_opts) {
        Ok(e) => Ok(e),
        Err(err) => {
            tracing::warn!(%err, "inner fit failed, retrying from the default start");
            mem::estimate(x_xi, neg, &MemOptions { start: None, ..*opts })
        }
    }
}

fn inner_vmem(x_xi: &DMatrix<f64>, neg: &[f64], opts: &VMemOptions, warm: Option<&VEstimate>) -> Result<VEstimate> {
    let mut warm_opts = opts.clone();
    if let Some(e) = warm {
        warm_opts.start = Some(e.params.clone());
    }
    match vmem::vestimate(x_xi, neg, &warm_opts) {
        Ok(e) => Ok(e),
        Err(err) => {
            tracing::warn!(%err, "inner fit failed, retrying from the default start");
            vmem::vestimate(x_xi, neg, &VMemOptions { start: None, ..opts.clone() })
        }
    }
}

/// One evaluation of the alternation map at a given low-frequency path.
struct Step<E> {
    est: E,
    theta: Vec<f64>,
    /// smoothed target built from the fitted short-run component
    next_tau: Vec<f64>,
}

struct Alternation<E> {
    tau: Vec<f64>,
    est: E,
    converged: bool,
    iterations: usize,
}

fn log_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x.ln() - y.ln()).powi(2)).sum::<f64>().sqrt()
}

/// Squared extrapolation on `ln tau` from `t0`, `t1 = G(t0)`, `t2 = G(t1)`.
fn extrapolate(t0: &[f64], t1: &[f64], t2: &[f64]) -> Result<Vec<f64>> {
    let (mut rr, mut vv) = (0.0, 0.0);
    for i in 0..t0.len() {
        let (l0, l1, l2) = (t0[i].ln(), t1[i].ln(), t2[i].ln());
        rr += (l1 - l0).powi(2);
        vv += (l2 - 2.0 * l1 + l0).powi(2);
    }
    let mut a = -(rr / vv).sqrt();
    if !(a.is_finite() && a < -1.0) {
        a = -1.0;
    }
    let path = (0..t0.len())
        .map(|i| {
            let (l0, l1, l2) = (t0[i].ln(), t1[i].ln(), t2[i].ln());
            (l0 - 2.0 * a * (l1 - l0) + a * a * (l2 - 2.0 * l1 + l0)).exp()
        })
        .collect();
    smoother::normalize_unit_mean(path)
}

/// Fixed-point iteration `tau -> G(tau)`, optionally accelerated. Every
/// evaluation of `G` counts as one outer iteration, and convergence is
/// always judged on a plain evaluation.
fn alternate<E>(
    tau0: Vec<f64>,
    theta0: Vec<f64>,
    opts: &SpFitOptions,
    mut eval: impl FnMut(&[f64], Option<&E>) -> Result<Step<E>>,
) -> Result<Alternation<E>> {
    let mut tau = tau0;
    let mut prev_theta = theta0;
    let mut last: Option<E> = None;
    // (t0, G(t0)) at the start of an extrapolation cycle
    let mut anchor: Option<(Vec<f64>, Vec<f64>)> = None;
    // fallback point and residual norm after an extrapolated proposal
    let mut guard: Option<(Vec<f64>, f64)> = None;
    let mut iter = 0;
    while iter < opts.max_outer_iter {
        iter += 1;
        let step = eval(&tau, last.as_ref())?;
        let dt = tau_change(&step.next_tau, &tau);
        let dp = theta_change(&step.theta, &prev_theta);
        tracing::debug!(iteration = iter, tau_change = dt, theta_change = dp, "outer iteration");
        prev_theta = step.theta;
        last = Some(step.est);
        if dt.max(dp) < opts.outer_tol {
            return Ok(Alternation { tau, est: last.expect("just set"), converged: true, iterations: iter });
        }
        let next = step.next_tau;
        if !opts.accelerate {
            tau = next;
            continue;
        }
        if let Some((fallback, res)) = guard.take() {
            if log_norm(&next, &tau) > res {
                tracing::debug!(iteration = iter, "extrapolated path rejected");
                tau = fallback;
                continue;
            }
        }
        tau = match anchor.take() {
            Some((t0, t1)) if t1 == tau => {
                let res = log_norm(&next, &tau);
                let proposal = extrapolate(&t0, &t1, &next)?;
                guard = Some((next, res));
                proposal
            }
            _ => {
                anchor = Some((tau, next.clone()));
                next
            }
        };
    }
    tracing::warn!(iterations = iter, "{}", Error::NoOuterConvergence { iterations: iter });
    Ok(Alternation { tau, est: last.expect("at least one outer iteration"), converged: false, iterations: iter })
}

/// Alternating estimation of the univariate semiparametric model. When the
/// iteration cap is reached the last iterate is returned with
/// `converged = false`.
pub fn fit_spmem(series: &ObservationSeries, opts: &SpFitOptions) -> Result<FitResult> {
    opts.validate()?;
    let n = series.len();
    if n < MIN_SP_OBS {
        return Err(Error::TooShort { label: series.label().into(), len: n, min: MIN_SP_OBS });
    }
    let x = series.values();
    let neg = series.neg_indicator();
    let mu = positive_mean(x)?;
    let theta0 = opts.mem.start.unwrap_or_else(mem::default_start).theta().to_vec();
    let first: Vec<f64> = x.iter().map(|v| v / mu).collect();
    let tau0 = smoother::nw_smooth(&first, &opts.smoother)?;
    let run = alternate(tau0, theta0, opts, |tau: &[f64], warm: Option<&MemEstimate>| {
        let x_xi: Vec<f64> = x.iter().zip(tau).map(|(v, t)| v / (mu * t)).collect();
        let est = inner_mem(&x_xi, &neg, &opts.mem, warm)?;
        let target: Vec<f64> = x.iter().zip(&est.xi).map(|(v, s)| v / (mu * s)).collect();
        let next_tau = smoother::nw_smooth(&target, &opts.smoother)?;
        Ok(Step { theta: est.params.theta().to_vec(), est, next_tau })
    })?;
    let mut fit = mem::assemble_fit(run.est, x, mu, run.tau, ModelKind::SpMem);
    fit.converged = run.converged;
    fit.outer_iterations = run.iterations;
    fit.bandwidth_days = Some(opts.smoother.bandwidth_days());
    Ok(label_fit(fit, vec![series.label().to_string()], series.dates().to_vec()))
}

/// Alternating estimation of the vector semiparametric model, with the low
/// frequency target built from precision-weighted rescaled series (equal
/// weights before the first fit).
pub fn fit_spvmem(panel: &AlignedPanel, opts: &SpFitOptions) -> Result<FitResult> {
    opts.validate()?;
    let (n, k) = (panel.n_obs(), panel.n_series());
    if n < MIN_SP_OBS {
        return Err(Error::TooShort { label: "panel".into(), len: n, min: MIN_SP_OBS });
    }
    if k < 2 {
        return Err(Error::InvalidArgument("the vector model needs at least two series".into()));
    }
    let x = panel.values();
    let neg = panel.neg_indicator();
    let mu = panel_means(panel)?;
    let theta0 = opts.vmem.start.clone().unwrap_or_else(|| vmem::default_vstart(k)).theta();
    let first = DMatrix::from_fn(n, k, |t, j| x[(t, j)] / mu[j]);
    let tau0 = smoother::nw_smooth(&smoother::precision_weighted_target(&first, &vec![1.0; k])?, &opts.smoother)?;
    let run = alternate(tau0, theta0, opts, |tau: &[f64], warm: Option<&VEstimate>| {
        let x_xi = DMatrix::from_fn(n, k, |t, j| x[(t, j)] / (mu[j] * tau[t]));
        let est = inner_vmem(&x_xi, &neg, &opts.vmem, warm)?;
        let scaled = DMatrix::from_fn(n, k, |t, j| x[(t, j)] / (mu[j] * est.xi[(t, j)]));
        let sigma_diag: Vec<f64> = est.sigma.diagonal().iter().copied().collect();
        let next_tau = smoother::nw_smooth(&smoother::precision_weighted_target(&scaled, &sigma_diag)?, &opts.smoother)?;
        Ok(Step { theta: est.params.theta(), est, next_tau })
    })?;
    let mut fit = vmem::assemble_vfit(run.est, x, mu, run.tau, ModelKind::SpvMem);
    fit.converged = run.converged;
    fit.outer_iterations = run.iterations;
    fit.bandwidth_days = Some(opts.smoother.bandwidth_days());
    Ok(label_fit(fit, panel.labels().to_vec(), panel.dates().to_vec()))
}

/// Dispatch on the model kind. Univariate kinds use the first panel column.
pub fn fit_model(kind: ModelKind, panel: &AlignedPanel, opts: &SpFitOptions) -> Result<FitResult> {
    match kind {
        ModelKind::Mem => fit_base_mem(&panel.series(0), &opts.mem),
        ModelKind::SpMem => fit_spmem(&panel.series(0), opts),
        ModelKind::VMem => fit_base_vmem(panel, &opts.vmem),
        ModelKind::SpvMem => fit_spvmem(panel, opts),
    }
}
