#![allow(dead_code)]

use memkit::data::{Params, UniParams, VecParams};
use memkit::dist::{calibrate, DistKind};
use memkit::sim::{DgpSpec, TauProfile};
use nalgebra::DMatrix;

/// Asymptotic Kolmogorov–Smirnov p-value for uniformity on [0, 1], with
/// Stephens' finite-sample adjustment of the statistic.
pub fn ks_uniform_pvalue(sample: &[f64]) -> f64 {
    let mut u = sample.to_vec();
    u.sort_by(|a, b| a.total_cmp(b));
    let n = u.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &v) in u.iter().enumerate() {
        d = d.max((i as f64 + 1.0) / n - v).max(v - i as f64 / n);
    }
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    let mut p = 0.0;
    for j in 1..=100 {
        let jf = j as f64;
        let term = 2.0 * (-1f64).powi(j - 1) * (-2.0 * jf * jf * lambda * lambda).exp();
        p += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    p.clamp(0.0, 1.0)
}

/// Adaptive Simpson quadrature of `f` on `[a, b]`.
pub fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
    }
    let (fa, fb) = (f(a), f(b));
    let fm = f(0.5 * (a + b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// `int_0^inf g(x) dx` via `x = e^s` on `[-lo, hi]`, split into unit pieces.
pub fn integrate_positive<F: Fn(f64) -> f64>(g: F, lo: f64, hi: f64) -> f64 {
    let h = |s: f64| {
        let x = s.exp();
        g(x) * x
    };
    let mut total = 0.0;
    let mut a = -lo;
    while a < hi {
        let b = (a + 1.0).min(hi);
        total += simpson(&h, a, b, 1e-14);
        a = b;
    }
    total
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn sd(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)).sqrt()
}

pub fn uni_dgp(star: f64, alpha: f64, gamma: f64, sigma2: f64, tau: TauProfile, seed: u64) -> DgpSpec {
    DgpSpec {
        params: Params::Uni(UniParams::from_persistence(star, alpha, gamma).unwrap()),
        mu: vec![12.0],
        tau,
        errors: vec![calibrate(DistKind::Gamma, sigma2).unwrap()],
        dependence: None,
        neg_prob: 0.5,
        seed,
    }
}

/// Two-series process with spillovers of 0.05 and correlated Gamma errors.
pub fn bivariate_params() -> VecParams {
    let alpha = DMatrix::from_row_slice(2, 2, &[0.15, 0.05, 0.05, 0.10]);
    VecParams::new(vec![0.70, 0.75], alpha, vec![0.08, 0.05]).unwrap()
}

pub fn bivariate_dgp(sigma2: [f64; 2], rho: f64, tau: TauProfile, seed: u64) -> DgpSpec {
    DgpSpec {
        params: Params::Vec(bivariate_params()),
        mu: vec![10.0, 20.0],
        tau,
        errors: vec![calibrate(DistKind::Gamma, sigma2[0]).unwrap(), calibrate(DistKind::Gamma, sigma2[1]).unwrap()],
        dependence: Some(DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0])),
        neg_prob: 0.5,
        seed,
    }
}

/// Random stationary univariate parameters from a deterministic stream.
pub fn random_uni(rng: &mut impl rand::Rng) -> UniParams {
    let star: f64 = rng.gen_range(0.5..0.97);
    let alpha: f64 = rng.gen_range(0.02..0.3);
    let gamma: f64 = rng.gen_range(0.0..0.2);
    UniParams::from_persistence(star, alpha.min(star * 0.5), gamma).unwrap()
}
