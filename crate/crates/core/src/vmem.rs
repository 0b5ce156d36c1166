//! K-variate short-run component with diagonal `beta1`, `gamma1` and full
//! `alpha1`, estimated by iterated two-step GMM with `Sigma^-1` weighting.
//!
//! Because `beta1` is diagonal, `xi_{t,i}` depends only on the parameters of
//! equation `i`; the stacked gradient `d xi_t / d theta'` is block diagonal.
//! The criterion is `sum_t D_t' Sigma^-1 (eps_t - 1)` with
//! `D_t = diag(xi_t)^-1 d xi_t / d theta'`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{alpha_index, gamma_index, n_vec_params, to_rows, FitResult, ModelKind, Params, VecParams};
use crate::diagnostics::r_squared;
use crate::error::{Error, Result};
use crate::linalg;
use crate::mem::PERSISTENCE_CEILING;
use crate::special::chi2_sf;

pub const MIN_VFIT_OBS: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct VXiState {
    /// T x K
    pub xi: DMatrix<f64>,
    /// `x_{t,i} - xi_{t,i}`
    pub v: DMatrix<f64>,
    /// `x_{t,i} D_t - xi_{t,i} / 2`
    pub v_minus: DMatrix<f64>,
}

fn check_inputs(x: &DMatrix<f64>, neg: &[f64], k: usize) -> Result<()> {
    if x.nrows() != neg.len() {
        return Err(Error::MismatchedReturns(format!("{} rows, {} indicators", x.nrows(), neg.len())));
    }
    if x.ncols() != k {
        return Err(Error::InvalidArgument(format!("panel has {} columns, parameters have {k}", x.ncols())));
    }
    if x.nrows() == 0 {
        return Err(Error::InvalidArgument("empty panel".into()));
    }
    Ok(())
}

/// Recursion coefficients unpacked once for the inner loops.
struct Coeffs {
    k: usize,
    beta: Vec<f64>,
    alpha: DMatrix<f64>,
    gamma: Vec<f64>,
    omega: Vec<f64>,
}

impl Coeffs {
    fn new(p: &VecParams) -> Self {
        Coeffs {
            k: p.dim(),
            beta: p.beta1_diag().to_vec(),
            alpha: p.alpha1().clone(),
            gamma: p.gamma1_diag().to_vec(),
            omega: p.intercept(),
        }
    }
}

fn xi_path(c: &Coeffs, x: &DMatrix<f64>, neg: &[f64]) -> Result<DMatrix<f64>> {
    let (n, k) = (x.nrows(), c.k);
    let mut xi = DMatrix::from_element(n, k, 1.0);
    for t in 1..n {
        for i in 0..k {
            let mut v = c.omega[i] + c.beta[i] * xi[(t - 1, i)] + c.gamma[i] * x[(t - 1, i)] * neg[t - 1];
            for j in 0..k {
                v += c.alpha[(i, j)] * x[(t - 1, j)];
            }
            if !(v > 0.0) {
                return Err(Error::NonPositiveXi { row: t, series: i });
            }
            xi[(t, i)] = v;
        }
    }
    Ok(xi)
}

pub fn vxi_filter(params: &VecParams, x_xi: &DMatrix<f64>, neg_indicator: &[f64]) -> Result<VXiState> {
    check_inputs(x_xi, neg_indicator, params.dim())?;
    let xi = xi_path(&Coeffs::new(params), x_xi, neg_indicator)?;
    let v = x_xi - &xi;
    let v_minus = DMatrix::from_fn(xi.nrows(), xi.ncols(), |t, i| x_xi[(t, i)] * neg_indicator[t] - 0.5 * xi[(t, i)]);
    Ok(VXiState { xi, v, v_minus })
}

/// Per-equation gradient blocks, `T * K * (K+2)` values laid out as
/// `[t][i][block position]`.
fn gradient_blocks(c: &Coeffs, x: &DMatrix<f64>, neg: &[f64], xi: &DMatrix<f64>) -> Vec<f64> {
    let (n, k) = (x.nrows(), c.k);
    let w = k + 2;
    let mut g = vec![0.0; n * k * w];
    for t in 1..n {
        for i in 0..k {
            let b = c.beta[i];
            let prev = (t - 1) * k * w + i * w;
            let cur = t * k * w + i * w;
            g[cur] = -1.0 + xi[(t - 1, i)] + b * g[prev];
            for j in 0..k {
                g[cur + 1 + j] = -1.0 + x[(t - 1, j)] + b * g[prev + 1 + j];
            }
            g[cur + k + 1] = -0.5 + x[(t - 1, i)] * neg[t - 1] + b * g[prev + k + 1];
        }
    }
    g
}

/// Stacked gradient `d xi_t / d theta'` (K x K(K+2)) for every t.
pub fn vxi_gradient(params: &VecParams, x_xi: &DMatrix<f64>, neg_indicator: &[f64]) -> Result<Vec<DMatrix<f64>>> {
    check_inputs(x_xi, neg_indicator, params.dim())?;
    let c = Coeffs::new(params);
    let xi = xi_path(&c, x_xi, neg_indicator)?;
    let g = gradient_blocks(&c, x_xi, neg_indicator, &xi);
    let (k, w) = (c.k, c.k + 2);
    Ok((0..x_xi.nrows())
        .map(|t| {
            let mut m = DMatrix::zeros(k, n_vec_params(k));
            for i in 0..k {
                for p in 0..w {
                    m[(i, i * w + p)] = g[t * k * w + i * w + p];
                }
            }
            m
        })
        .collect())
}

/// Filter output and scaled gradients at one parameter point.
struct Evaluation {
    k: usize,
    xi: DMatrix<f64>,
    eps: DMatrix<f64>,
    /// gradient blocks divided by `xi_{t,i}`
    a: Vec<f64>,
}

fn evaluate(p: &VecParams, x: &DMatrix<f64>, neg: &[f64]) -> Result<Evaluation> {
    let c = Coeffs::new(p);
    let xi = xi_path(&c, x, neg)?;
    let mut a = gradient_blocks(&c, x, neg, &xi);
    let (k, w) = (c.k, c.k + 2);
    for t in 0..x.nrows() {
        for i in 0..k {
            let s = xi[(t, i)];
            a[t * k * w + i * w..t * k * w + (i + 1) * w].iter_mut().for_each(|v| *v /= s);
        }
    }
    let eps = x.component_div(&xi);
    Ok(Evaluation { k, xi, eps, a })
}

impl Evaluation {
    fn n(&self) -> usize {
        self.xi.nrows()
    }

    /// `T^-1 sum_t D_t' W u_t`
    fn criterion_mean(&self, w_mat: &DMatrix<f64>) -> DVector<f64> {
        let (k, w) = (self.k, self.k + 2);
        let mut m = DVector::zeros(n_vec_params(k));
        let mut wu = vec![0.0; k];
        for t in 0..self.n() {
            for (i, slot) in wu.iter_mut().enumerate() {
                *slot = (0..k).map(|j| w_mat[(i, j)] * (self.eps[(t, j)] - 1.0)).sum();
            }
            for i in 0..k {
                let base = t * k * w + i * w;
                for p in 0..w {
                    m[i * w + p] += self.a[base + p] * wu[i];
                }
            }
        }
        m / self.n() as f64
    }

    /// `T^-1 sum_t D_t' W D_t`
    fn information(&self, w_mat: &DMatrix<f64>) -> DMatrix<f64> {
        let (k, w) = (self.k, self.k + 2);
        let np = n_vec_params(k);
        let mut h = DMatrix::zeros(np, np);
        for t in 0..self.n() {
            for i in 0..k {
                let ai = &self.a[t * k * w + i * w..t * k * w + (i + 1) * w];
                for j in 0..k {
                    let wij = w_mat[(i, j)];
                    if wij == 0.0 {
                        continue;
                    }
                    let aj = &self.a[t * k * w + j * w..t * k * w + (j + 1) * w];
                    for p in 0..w {
                        let f = wij * ai[p];
                        for q in 0..w {
                            h[(i * w + p, j * w + q)] += f * aj[q];
                        }
                    }
                }
            }
        }
        h / self.n() as f64
    }

    /// `T^-1 sum_t (eps_t - 1)(eps_t - 1)'`
    fn sigma(&self) -> DMatrix<f64> {
        let u = self.eps.map(|e| e - 1.0);
        linalg::symmetrize(&(u.transpose() * &u / self.n() as f64))
    }
}

/// `sum_t D_t' Sigma^-1 (eps_t - 1)` for a given error covariance.
pub fn vgmm_criterion(params: &VecParams, x_xi: &DMatrix<f64>, neg_indicator: &[f64], sigma: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_inputs(x_xi, neg_indicator, params.dim())?;
    let w = linalg::spd_inverse(sigma).ok_or(Error::SingularSigma)?;
    let ev = evaluate(params, x_xi, neg_indicator)?;
    Ok((ev.criterion_mean(&w) * x_xi.nrows() as f64).as_slice().to_vec())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VMemOptions {
    /// Newton iterations per weighting step.
    pub max_iter: usize,
    /// Tolerance on the max-norm of the mean criterion.
    pub grad_tol: f64,
    /// Maximum number of weight-matrix updates.
    pub max_outer: usize,
    /// Stop updating the weight matrix when no parameter moves by more than this.
    pub param_tol: f64,
    pub start: Option<VecParams>,
    /// Parameter positions held at zero.
    #[serde(default)]
    pub fixed_zero: Vec<usize>,
    /// Keep only the diagonal of the estimated error covariance in the weight.
    #[serde(default)]
    pub diagonal_sigma: bool,
}

impl Default for VMemOptions {
    fn default() -> Self {
        VMemOptions {
            max_iter: 200,
            grad_tol: 1e-9,
            max_outer: 100,
            param_tol: 1e-7,
            start: None,
            fixed_zero: vec![],
            diagonal_sigma: false,
        }
    }
}

/// Own-persistence 0.9 per equation (`alpha[i,i] = 0.15`, `gamma[i,i] = 0.05`),
/// zero spillovers.
pub fn default_vstart(k: usize) -> VecParams {
    let alpha = DMatrix::from_diagonal_element(k, k, 0.15);
    VecParams::new(vec![0.725; k], alpha, vec![0.05; k]).expect("admissible default")
}

#[derive(Debug, Clone, PartialEq)]
pub struct VEstimate {
    pub params: VecParams,
    pub xi: DMatrix<f64>,
    pub residuals: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
    /// covariance of the estimates, `(T^-1 sum D' Sigma^-1 D)^-1 / T`
    pub avar: DMatrix<f64>,
    /// mean criterion at the estimate
    pub criterion: Vec<f64>,
    pub iterations: usize,
    pub outer_iterations: usize,
}

fn admissible(k: usize, theta: &[f64]) -> Option<VecParams> {
    let p = VecParams::from_theta(k, theta).ok()?;
    (p.spectral_radius() < PERSISTENCE_CEILING).then_some(p)
}

/// Newton solve of the criterion equation at a fixed weight, over the free
/// positions only.
struct Solver<'a> {
    k: usize,
    x: &'a DMatrix<f64>,
    neg: &'a [f64],
    weight: DMatrix<f64>,
    free: Vec<usize>,
}

impl Solver<'_> {
    fn embed(&self, base: &[f64], free_vals: &DVector<f64>) -> Vec<f64> {
        let mut th = base.to_vec();
        for (f, &idx) in self.free.iter().enumerate() {
            th[idx] = free_vals[f];
        }
        th
    }

    fn restrict(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.free.len(), self.free.iter().map(|&i| v[i]))
    }

    fn moments(&self, theta: &[f64]) -> Option<(DVector<f64>, Evaluation)> {
        let p = admissible(self.k, theta)?;
        let ev = evaluate(&p, self.x, self.neg).ok()?;
        Some((self.restrict(&ev.criterion_mean(&self.weight)), ev))
    }

    fn jacobian(&self, theta: &[f64]) -> Option<DMatrix<f64>> {
        let nf = self.free.len();
        let mut jac = DMatrix::zeros(nf, nf);
        for (c, &idx) in self.free.iter().enumerate() {
            let h = 1e-6 * theta[idx].abs().max(1.0);
            let mut up = theta.to_vec();
            let mut dn = theta.to_vec();
            up[idx] += h;
            dn[idx] -= h;
            let col = match (self.moments(&up), self.moments(&dn)) {
                (Some((a, _)), Some((b, _))) => (a - b) / (2.0 * h),
                (Some((a, _)), None) => (a - self.moments(theta)?.0) / h,
                (None, Some((b, _))) => (self.moments(theta)?.0 - b) / h,
                (None, None) => return None,
            };
            jac.set_column(c, &col);
        }
        Some(jac)
    }

    fn line_search(&self, theta: &[f64], m: &DVector<f64>, dir: &DVector<f64>) -> Option<(Vec<f64>, DVector<f64>)> {
        let merit = m.norm_squared();
        let cur = self.restrict(&DVector::from_column_slice(theta));
        let mut step = 1.0;
        for _ in 0..50 {
            let trial = self.embed(theta, &(&cur + dir * step));
            if let Some((mt, _)) = self.moments(&trial) {
                if mt.norm_squared() <= merit * (1.0 - 1e-4 * step) {
                    return Some((trial, mt));
                }
            }
            step *= 0.5;
        }
        None
    }

    fn solve(&self, start: &[f64], opts: &VMemOptions) -> Result<(Vec<f64>, usize)> {
        let mut theta = start.to_vec();
        let (mut m, _) =
            self.moments(&theta).ok_or_else(|| Error::NonStationary("starting point is inadmissible".into()))?;
        for iter in 0..opts.max_iter {
            if linalg::max_abs(m.as_slice()) < opts.grad_tol {
                return Ok((theta, iter));
            }
            let newton = self.jacobian(&theta).and_then(|j| j.lu().solve(&(-&m)));
            let mut next = newton.and_then(|d| self.line_search(&theta, &m, &d));
            if next.is_none() {
                // scoring direction H^-1 m, since dm/dtheta ~ -H
                let (_, ev) = self.moments(&theta).expect("current point admissible");
                let h = ev.information(&self.weight);
                let hf = DMatrix::from_fn(self.free.len(), self.free.len(), |a, b| h[(self.free[a], self.free[b])]);
                next = hf.lu().solve(&m).and_then(|d| self.line_search(&theta, &m, &d));
            }
            match next {
                Some((t, mt)) => {
                    theta = t;
                    m = mt;
                }
                None => {
                    return Err(Error::NoConvergence { iterations: iter, gradient_norm: linalg::max_abs(m.as_slice()) })
                }
            }
        }
        if linalg::max_abs(m.as_slice()) < opts.grad_tol {
            Ok((theta, opts.max_iter))
        } else {
            Err(Error::NoConvergence { iterations: opts.max_iter, gradient_norm: linalg::max_abs(m.as_slice()) })
        }
    }
}

/// Iterated two-step GMM on an already rescaled panel.
pub fn vestimate(x_xi: &DMatrix<f64>, neg_indicator: &[f64], opts: &VMemOptions) -> Result<VEstimate> {
    let (n, k) = x_xi.shape();
    check_inputs(x_xi, neg_indicator, k)?;
    if k < 2 {
        return Err(Error::InvalidArgument("the vector model needs at least two series".into()));
    }
    if n < MIN_VFIT_OBS {
        return Err(Error::TooShort { label: "panel".into(), len: n, min: MIN_VFIT_OBS });
    }
    if let Some(i) = x_xi.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::NegativeValue { index: i % n, value: x_xi[i] });
    }
    let np = n_vec_params(k);
    if let Some(&bad) = opts.fixed_zero.iter().find(|&&i| i >= np) {
        return Err(Error::InvalidArgument(format!("restricted position {bad} outside 0..{np}")));
    }
    let free: Vec<usize> = (0..np).filter(|i| !opts.fixed_zero.contains(i)).collect();
    let mut theta = opts.start.clone().unwrap_or_else(|| default_vstart(k)).theta();
    if theta.len() != np {
        return Err(Error::InvalidArgument("starting point has the wrong dimension".into()));
    }
    for &i in &opts.fixed_zero {
        theta[i] = 0.0;
    }

    let mut solver = Solver { k, x: x_xi, neg: neg_indicator, weight: DMatrix::identity(k, k), free };
    let (mut theta, mut iterations) = solver.solve(&theta, opts)?;
    let mut weight = solver.weight.clone();
    let mut outer = 1;
    let mut converged = false;
    while outer < opts.max_outer {
        outer += 1;
        let ev = evaluate(&VecParams::from_theta(k, &theta)?, x_xi, neg_indicator)?;
        let mut sigma = ev.sigma();
        if opts.diagonal_sigma {
            sigma = DMatrix::from_diagonal(&sigma.diagonal());
        }
        solver.weight = linalg::spd_inverse(&sigma).ok_or(Error::SingularSigma)?;
        match solver.solve(&theta, opts) {
            Ok((next, it)) => {
                iterations += it;
                let change = next.iter().zip(&theta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                tracing::trace!(outer, change, "weight update");
                theta = next;
                weight = solver.weight.clone();
                if change < opts.param_tol {
                    converged = true;
                    break;
                }
            }
            Err(err) => {
                // the moment equations need not have a root at every weight in
                // finite samples; keep the root found at the previous weight
                tracing::warn!(%err, outer, "no root at the updated weight, keeping the previous one");
                converged = true;
                break;
            }
        }
    }
    if !converged {
        return Err(Error::NoConvergence { iterations, gradient_norm: f64::NAN });
    }
    solver.weight = weight;
    let params = VecParams::from_theta(k, &theta)?;
    let ev = evaluate(&params, x_xi, neg_indicator)?;
    let mut sigma = ev.sigma();
    if opts.diagonal_sigma {
        sigma = DMatrix::from_diagonal(&sigma.diagonal());
    }
    let w = linalg::spd_inverse(&sigma).ok_or(Error::SingularSigma)?;
    let h = ev.information(&w);
    let nfree = solver.free.len();
    let hf = DMatrix::from_fn(nfree, nfree, |a, b| h[(solver.free[a], solver.free[b])]);
    let hf_inv = linalg::spd_inverse(&hf).ok_or(Error::SingularA)?;
    let mut avar = DMatrix::zeros(np, np);
    for (a, &ia) in solver.free.iter().enumerate() {
        for (b, &ib) in solver.free.iter().enumerate() {
            avar[(ia, ib)] = hf_inv[(a, b)] / n as f64;
        }
    }
    let criterion = ev.criterion_mean(&solver.weight).as_slice().to_vec();
    Ok(VEstimate {
        params,
        xi: ev.xi,
        residuals: ev.eps,
        sigma,
        avar,
        criterion,
        iterations,
        outer_iterations: outer,
    })
}

/// Estimate and package as a base vector fit on an already rescaled panel
/// (`mu = 1`, `tau = 1`).
pub fn vgmm_fit(x_xi: &DMatrix<f64>, neg_indicator: &[f64], opts: &VMemOptions) -> Result<FitResult> {
    let est = vestimate(x_xi, neg_indicator, opts)?;
    let k = x_xi.ncols();
    Ok(assemble_vfit(est, x_xi, vec![1.0; k], vec![1.0; x_xi.nrows()], ModelKind::VMem))
}

pub(crate) fn assemble_vfit(est: VEstimate, x: &DMatrix<f64>, mu: Vec<f64>, tau: Vec<f64>, model: ModelKind) -> FitResult {
    let k = x.ncols();
    let rsq = (0..k)
        .map(|j| {
            let fitted: Vec<f64> = (0..x.nrows()).map(|t| mu[j] * tau[t] * est.xi[(t, j)]).collect();
            let obs: Vec<f64> = x.column(j).iter().copied().collect();
            r_squared(&obs, &fitted).unwrap_or(f64::NAN)
        })
        .collect();
    FitResult {
        model,
        labels: vec![],
        dates: vec![],
        params: Params::Vec(est.params),
        mu,
        tau,
        xi: to_rows(&est.xi),
        residuals: to_rows(&est.residuals),
        sigma2: to_rows(&est.sigma),
        avar: to_rows(&est.avar),
        rsq,
        converged: true,
        iterations: est.iterations,
        outer_iterations: est.outer_iterations,
        bandwidth_days: None,
        criterion: est.criterion,
        diagnostics: None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaldResult {
    pub statistic: f64,
    pub df: usize,
    pub pvalue: f64,
}

/// `W = theta_R' [avar_RR]^-1 theta_R` against chi-square with `df` degrees
/// of freedom. `df` is supplied by the caller and need not equal the number
/// of restrictions.
pub fn wald_test(fit: &FitResult, restricted: &[usize], df: usize) -> Result<WaldResult> {
    let theta = fit.theta();
    let np = theta.len();
    if restricted.is_empty() || restricted.iter().any(|&i| i >= np) {
        return Err(Error::InvalidArgument(format!("restricted positions must lie in 0..{np}")));
    }
    let r = restricted.len();
    let v = DMatrix::from_fn(r, r, |a, b| fit.avar[restricted[a]][restricted[b]]);
    let th = DVector::from_iterator(r, restricted.iter().map(|&i| theta[i]));
    let w = linalg::spd_solve(&v, &th).ok_or(Error::SingularSubmatrix)?;
    let statistic = th.dot(&w).max(0.0);
    wald_from_statistic(statistic, df)
}

pub fn wald_from_statistic(statistic: f64, df: usize) -> Result<WaldResult> {
    if df == 0 {
        return Err(Error::NonPositiveDf(0));
    }
    Ok(WaldResult { statistic, df, pvalue: chi2_sf(statistic, df as f64) })
}

/// Positions of `alpha[i,1]` for every equation and `gamma[1,1]`: the zero
/// restriction under which the first series is irrelevant to its own
/// dynamics and to the other equations.
pub fn heavy_restriction(k: usize) -> Vec<usize> {
    let mut idx = vec![alpha_index(k, 0, 0), gamma_index(k, 0)];
    idx.extend((1..k).map(|i| alpha_index(k, i, 0)));
    idx
}

/// `xi_{t+h|t}` for horizons `1..=h` given the state at `t`, the last
/// observations and the last sign indicator.
pub fn vforecast(params: &VecParams, xi_t: &[f64], x_t: &[f64], neg_t: f64, h: usize) -> Result<Vec<Vec<f64>>> {
    let k = params.dim();
    if h == 0 {
        return Err(Error::InvalidArgument("forecast horizon must be at least 1".into()));
    }
    if xi_t.len() != k || x_t.len() != k {
        return Err(Error::InvalidArgument("state dimension differs from parameters".into()));
    }
    let c = Coeffs::new(params);
    let mut f = DVector::from_fn(k, |i, _| {
        c.omega[i] + c.beta[i] * xi_t[i] + c.gamma[i] * x_t[i] * neg_t + (0..k).map(|j| c.alpha[(i, j)] * x_t[j]).sum::<f64>()
    });
    let star = params.persistence();
    let ones = DVector::from_element(k, 1.0);
    let base = &ones - &star * &ones;
    let mut out = Vec::with_capacity(h);
    out.push(f.as_slice().to_vec());
    for _ in 1..h {
        f = &base + &star * &f;
        out.push(f.as_slice().to_vec());
    }
    Ok(out)
}
