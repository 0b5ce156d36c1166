//! Univariate short-run component: the asymmetric (1,1) recursion, its
//! parameter gradient, the efficient GMM criterion and its solution.
//!
//! The recursion is
//!
//! `xi_t = (1 - beta - alpha - gamma/2) + beta xi_{t-1} + alpha x_{t-1} + gamma x_{t-1} D_{t-1}`
//!
//! started at `xi_1 = 1`, where `x` is the series already divided by
//! `mu * tau_t` and `D_t = 1` on negative-return days. With
//! `eps_t = x_t / xi_t` and `a_t = grad(xi_t) / xi_t`, the estimator solves
//! `sum_t (eps_t - 1) a_t = 0`, which is also the score of the Gamma
//! quasi-likelihood `sum_t (ln eps_t - eps_t)`.

use nalgebra::{DMatrix, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::data::{to_rows, FitResult, ModelKind, Params, UniParams};
use crate::diagnostics::r_squared;
use crate::error::{Error, Result};
use crate::linalg;
use crate::optim::{bfgs_minimize, BfgsOptions};

pub const MIN_FIT_OBS: usize = 100;

/// Steps with persistence at or above this bound are rejected by the optimizer.
pub const PERSISTENCE_CEILING: f64 = 1.0 - 1e-6;

/// Filtered path and innovations.
#[derive(Debug, Clone, PartialEq)]
pub struct XiState {
    pub xi: Vec<f64>,
    /// `x_t - xi_t`
    pub v: Vec<f64>,
    /// `x_t D_t - xi_t / 2`
    pub v_minus: Vec<f64>,
}

impl XiState {
    pub fn last(&self) -> f64 {
        *self.xi.last().expect("non-empty path")
    }
}

fn check_inputs(x: &[f64], neg: &[f64]) -> Result<()> {
    if x.len() != neg.len() {
        return Err(Error::MismatchedReturns(format!("{} observations, {} indicators", x.len(), neg.len())));
    }
    if x.is_empty() {
        return Err(Error::InvalidArgument("empty series".into()));
    }
    Ok(())
}

fn xi_path(p: &UniParams, x: &[f64], neg: &[f64]) -> Result<Vec<f64>> {
    check_inputs(x, neg)?;
    let (b, a, g) = (p.beta1(), p.alpha1(), p.gamma1());
    let omega = p.intercept();
    let mut xi = Vec::with_capacity(x.len());
    xi.push(1.0);
    for t in 1..x.len() {
        let next = omega + b * xi[t - 1] + a * x[t - 1] + g * x[t - 1] * neg[t - 1];
        if !(next > 0.0) {
            return Err(Error::NonPositiveXi { row: t, series: 0 });
        }
        xi.push(next);
    }
    Ok(xi)
}

pub fn xi_filter(params: &UniParams, x_xi: &[f64], neg_indicator: &[f64]) -> Result<XiState> {
    let xi = xi_path(params, x_xi, neg_indicator)?;
    let v = x_xi.iter().zip(&xi).map(|(x, s)| x - s).collect();
    let v_minus = x_xi.iter().zip(neg_indicator).zip(&xi).map(|((x, d), s)| x * d - 0.5 * s).collect();
    Ok(XiState { xi, v, v_minus })
}

/// `d xi_t / d(beta1, alpha1, gamma1)` with a zero gradient at `t = 1`.
pub fn xi_gradient(params: &UniParams, x_xi: &[f64], neg_indicator: &[f64]) -> Result<Vec<[f64; 3]>> {
    let xi = xi_path(params, x_xi, neg_indicator)?;
    Ok(gradient_along(params, x_xi, neg_indicator, &xi))
}

fn gradient_along(p: &UniParams, x: &[f64], neg: &[f64], xi: &[f64]) -> Vec<[f64; 3]> {
    let b = p.beta1();
    let mut out = Vec::with_capacity(x.len());
    out.push([0.0; 3]);
    for t in 1..x.len() {
        let prev = out[t - 1];
        out.push([
            -1.0 + xi[t - 1] + b * prev[0],
            -1.0 + x[t - 1] + b * prev[1],
            -0.5 + x[t - 1] * neg[t - 1] + b * prev[2],
        ]);
    }
    out
}

/// Everything the estimator needs at one parameter point.
struct Evaluation {
    xi: Vec<f64>,
    /// `a_t = grad(xi_t) / xi_t`
    a: Vec<Vector3<f64>>,
    eps: Vec<f64>,
}

fn evaluate(p: &UniParams, x: &[f64], neg: &[f64]) -> Result<Evaluation> {
    let xi = xi_path(p, x, neg)?;
    let grad = gradient_along(p, x, neg, &xi);
    let a = grad.iter().zip(&xi).map(|(g, s)| Vector3::new(g[0], g[1], g[2]) / *s).collect();
    let eps = x.iter().zip(&xi).map(|(x, s)| x / s).collect();
    Ok(Evaluation { xi, a, eps })
}

impl Evaluation {
    fn criterion_sum(&self) -> Vector3<f64> {
        self.a.iter().zip(&self.eps).fold(Vector3::zeros(), |acc, (a, e)| acc + a * (e - 1.0))
    }

    fn a_outer_mean(&self) -> Matrix3<f64> {
        let n = self.a.len() as f64;
        self.a.iter().fold(Matrix3::zeros(), |acc, a| acc + a * a.transpose()) / n
    }

    /// `sum_t (ln xi_t ... )` form of the quasi-log-likelihood with the
    /// parameter-free `ln x_t` dropped, so zeros in `x` stay finite.
    fn quasi_loglik(&self) -> f64 {
        self.xi.iter().zip(&self.eps).map(|(s, e)| -s.ln() - e).sum()
    }
}

/// `sum_t (eps_t - 1) a_t`
pub fn gmm_criterion(params: &UniParams, x_xi: &[f64], neg_indicator: &[f64]) -> Result<[f64; 3]> {
    let c = evaluate(params, x_xi, neg_indicator)?.criterion_sum();
    Ok([c[0], c[1], c[2]])
}

/// Gamma quasi-log-likelihood `sum_t (ln eps_t - eps_t)`. Infinite when some
/// observation is exactly zero; the estimator works with the equivalent
/// `-ln xi_t - eps_t` form instead.
pub fn quasi_loglik(params: &UniParams, x_xi: &[f64], neg_indicator: &[f64]) -> Result<f64> {
    let ev = evaluate(params, x_xi, neg_indicator)?;
    Ok(ev.eps.iter().map(|e| e.ln() - e).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemOptions {
    pub max_iter: usize,
    /// Tolerance on the max-norm of the mean criterion `T^-1 sum (eps-1) a_t`.
    pub grad_tol: f64,
    pub start: Option<UniParams>,
}

impl Default for MemOptions {
    fn default() -> Self {
        MemOptions { max_iter: 500, grad_tol: 1e-7, start: None }
    }
}

/// Default starting point: persistence 0.9, alpha 0.15, gamma 0.05.
pub fn default_start() -> UniParams {
    UniParams::from_persistence(0.9, 0.15, 0.05).expect("admissible default")
}

/// Point estimate plus the quantities derived from it.
#[derive(Debug, Clone, PartialEq)]
pub struct MemEstimate {
    pub params: UniParams,
    pub xi: Vec<f64>,
    pub residuals: Vec<f64>,
    pub sigma2: f64,
    /// covariance of the estimates, `sigma2 * A^-1 / T`
    pub avar: DMatrix<f64>,
    /// mean criterion at the estimate
    pub criterion: [f64; 3],
    pub iterations: usize,
}

fn admissible(theta: &[f64]) -> Option<UniParams> {
    let p = UniParams::from_theta(theta).ok()?;
    (p.persistence() < PERSISTENCE_CEILING).then_some(p)
}

/// Solve the criterion equation by quasi-Newton ascent on the quasi-likelihood.
pub fn estimate(x_xi: &[f64], neg_indicator: &[f64], opts: &MemOptions) -> Result<MemEstimate> {
    check_inputs(x_xi, neg_indicator)?;
    let n = x_xi.len();
    if n < MIN_FIT_OBS {
        return Err(Error::TooShort { label: "x".into(), len: n, min: MIN_FIT_OBS });
    }
    if let Some(i) = x_xi.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::NegativeValue { index: i, value: x_xi[i] });
    }
    if x_xi.iter().all(|v| *v == x_xi[0]) {
        return Err(Error::SingularA);
    }
    let nf = n as f64;
    let start = opts.start.unwrap_or_else(default_start);
    let start_eval = evaluate(&start, x_xi, neg_indicator)?;
    let h0 = Matrix3::from(start_eval.a_outer_mean())
        .try_inverse()
        .filter(|m| m.iter().all(|v| v.is_finite()))
        .map(|m| DMatrix::from_column_slice(3, 3, m.as_slice()))
        .unwrap_or_else(|| DMatrix::identity(3, 3));

    let objective = |theta: &[f64]| {
        let p = admissible(theta)?;
        let ev = evaluate(&p, x_xi, neg_indicator).ok()?;
        let g = ev.criterion_sum() / nf;
        Some((-ev.quasi_loglik() / nf, vec![-g[0], -g[1], -g[2]]))
    };
    let bfgs = BfgsOptions { max_iter: opts.max_iter, grad_tol: opts.grad_tol, ..Default::default() };
    let out = bfgs_minimize(objective, &start.theta(), h0, bfgs).ok_or(Error::NonStationary(
        "starting point is inadmissible".into(),
    ))?;
    if !out.converged {
        return Err(Error::NoConvergence { iterations: out.iterations, gradient_norm: linalg::max_abs(&out.gradient) });
    }
    let params = UniParams::from_theta(&out.x)?;
    finish(params, x_xi, neg_indicator, out.iterations)
}

fn finish(params: UniParams, x: &[f64], neg: &[f64], iterations: usize) -> Result<MemEstimate> {
    let ev = evaluate(&params, x, neg)?;
    let nf = x.len() as f64;
    let sigma2 = ev.eps.iter().map(|e| (e - 1.0).powi(2)).sum::<f64>() / nf;
    let a_mean = ev.a_outer_mean();
    let a_dyn = DMatrix::from_column_slice(3, 3, a_mean.as_slice());
    let a_inv = linalg::spd_inverse(&a_dyn).ok_or(Error::SingularA)?;
    let avar = a_inv * (sigma2 / nf);
    let c = ev.criterion_sum() / nf;
    Ok(MemEstimate {
        params,
        xi: ev.xi,
        residuals: ev.eps,
        sigma2,
        avar,
        criterion: [c[0], c[1], c[2]],
        iterations,
    })
}

/// Estimate and package as a fit of the base model on an already rescaled
/// series (`mu = 1`, `tau = 1`).
pub fn fit_mem(x_xi: &[f64], neg_indicator: &[f64], opts: &MemOptions) -> Result<FitResult> {
    let est = estimate(x_xi, neg_indicator, opts)?;
    Ok(assemble_fit(est, x_xi, 1.0, vec![1.0; x_xi.len()], ModelKind::Mem))
}

/// Package an estimate given the raw series `x`, its mean and the
/// low-frequency path.
pub(crate) fn assemble_fit(est: MemEstimate, x: &[f64], mu: f64, tau: Vec<f64>, model: ModelKind) -> FitResult {
    let fitted: Vec<f64> = est.xi.iter().zip(&tau).map(|(s, t)| mu * t * s).collect();
    let rsq = r_squared(x, &fitted).unwrap_or(f64::NAN);
    FitResult {
        model,
        labels: vec![],
        dates: vec![],
        params: Params::Uni(est.params),
        mu: vec![mu],
        tau,
        xi: est.xi.iter().map(|v| vec![*v]).collect(),
        residuals: est.residuals.iter().map(|v| vec![*v]).collect(),
        sigma2: vec![vec![est.sigma2]],
        avar: to_rows(&est.avar),
        rsq: vec![rsq],
        converged: true,
        iterations: est.iterations,
        outer_iterations: 0,
        bandwidth_days: None,
        criterion: est.criterion.to_vec(),
        diagnostics: None,
    }
}

/// `xi_{t+h|t}` given `xi_t`, the last observation `x_t` and indicator `D_t`.
pub fn forecast_xi(params: &UniParams, xi_t: f64, x_t: f64, neg_t: f64, h: usize) -> Result<f64> {
    forecast_path(params, xi_t, x_t, neg_t, h).map(|p| *p.last().expect("h >= 1"))
}

/// Forecasts for horizons `1..=h`.
pub fn forecast_path(params: &UniParams, xi_t: f64, x_t: f64, neg_t: f64, h: usize) -> Result<Vec<f64>> {
    if h == 0 {
        return Err(Error::InvalidArgument("forecast horizon must be at least 1".into()));
    }
    let star = params.persistence();
    let mut out = Vec::with_capacity(h);
    let mut f = params.intercept() + params.beta1() * xi_t + params.alpha1() * x_t + params.gamma1() * x_t * neg_t;
    out.push(f);
    for _ in 1..h {
        f = (1.0 - star) + star * f;
        out.push(f);
    }
    Ok(out)
}
