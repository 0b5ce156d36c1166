mod common;

use memkit::data::{alpha_index, n_vec_params, Params, UniParams, VecParams};
use memkit::mem::{self, MemOptions};
use memkit::sim::{simulate, TauProfile};
use memkit::spfit::fit_base_vmem;
use memkit::vmem::{
    heavy_restriction, vforecast, vgmm_criterion, vgmm_fit, vxi_filter, vxi_gradient, wald_from_statistic, wald_test,
    VMemOptions,
};
use memkit::Error;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rescaled_panel(seed: u64, n: usize) -> (DMatrix<f64>, Vec<f64>) {
    let sim = simulate(&common::bivariate_dgp([0.2, 0.1], 0.5, TauProfile::Constant, seed), n).unwrap();
    let p = sim.panel;
    let mu = p.means();
    let x = DMatrix::from_fn(p.n_obs(), 2, |t, j| p.values()[(t, j)] / mu[j]);
    (x, p.neg_indicator())
}

fn random_vec_params(rng: &mut ChaCha8Rng, k: usize) -> VecParams {
    loop {
        let beta: Vec<f64> = (0..k).map(|_| rng.gen_range(0.4..0.8)).collect();
        let alpha = DMatrix::from_fn(k, k, |i, j| if i == j { rng.gen_range(0.05..0.2) } else { rng.gen_range(-0.03..0.08) });
        let gamma: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..0.1)).collect();
        if let Ok(p) = VecParams::new(beta, alpha, gamma) {
            return p;
        }
    }
}

#[test]
fn diagonal_alpha_decouples_into_univariate_filters() {
    let (x, d) = rescaled_panel(1, 500);
    let alpha = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.1, 0.2]));
    let p = VecParams::new(vec![0.7, 0.6], alpha, vec![0.05, 0.1]).unwrap();
    let st = vxi_filter(&p, &x, &d).unwrap();
    for (j, (b, a, g)) in [(0.7, 0.1, 0.05), (0.6, 0.2, 0.1)].into_iter().enumerate() {
        let col: Vec<f64> = x.column(j).iter().copied().collect();
        let u = mem::xi_filter(&UniParams::new(b, a, g).unwrap(), &col, &d).unwrap();
        for t in 0..500 {
            assert!((u.xi[t] - st.xi[(t, j)]).abs() < 1e-14);
            assert!((u.v_minus[t] - st.v_minus[(t, j)]).abs() < 1e-14);
        }
    }
}

#[test]
fn stacked_gradient_matches_finite_differences() {
    let (x, d) = rescaled_panel(2, 300);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let p = random_vec_params(&mut rng, 2);
        let g = vxi_gradient(&p, &x, &d).unwrap();
        let th = p.theta();
        for k in 0..n_vec_params(2) {
            let h = 1e-6;
            let (mut up, mut dn) = (th.clone(), th.clone());
            up[k] += h;
            dn[k] -= h;
            let a = vxi_filter(&VecParams::from_theta(2, &up).unwrap(), &x, &d).unwrap().xi;
            let b = vxi_filter(&VecParams::from_theta(2, &dn).unwrap(), &x, &d).unwrap().xi;
            for t in 1..300 {
                for i in 0..2 {
                    let fd = (a[(t, i)] - b[(t, i)]) / (2.0 * h);
                    let an = g[t][(i, k)];
                    assert!((fd - an).abs() <= 1e-6 * an.abs().max(1.0), "t={t} i={i} k={k}: {fd} vs {an}");
                }
            }
        }
    }
}

#[test]
fn criterion_vanishes_at_truth_without_noise() {
    let p0 = common::bivariate_params();
    let (_, d) = rescaled_panel(4, 400);
    // eps = 1: x_t = xi_t along the exact recursion
    let mut x = DMatrix::zeros(400, 2);
    let mut xi = vec![1.0, 1.0];
    let om = p0.intercept();
    for t in 0..400 {
        x[(t, 0)] = xi[0];
        x[(t, 1)] = xi[1];
        let a = p0.alpha1();
        let next: Vec<f64> = (0..2)
            .map(|i| {
                om[i] + p0.beta1_diag()[i] * xi[i] + p0.gamma1_diag()[i] * x[(t, i)] * d[t]
                    + (0..2).map(|j| a[(i, j)] * x[(t, j)]).sum::<f64>()
            })
            .collect();
        xi = next;
    }
    let sigma = DMatrix::from_row_slice(2, 2, &[0.2, 0.05, 0.05, 0.1]);
    let c = vgmm_criterion(&p0, &x, &d, &sigma).unwrap();
    assert!(c.iter().all(|v| v.abs() < 1e-10), "{c:?}");
}

#[test]
fn restricted_fit_with_diagonal_weight_matches_univariate_fits() {
    let (x, d) = rescaled_panel(5, 3000);
    let k = 2;
    let opts = VMemOptions {
        fixed_zero: vec![alpha_index(k, 0, 1), alpha_index(k, 1, 0)],
        diagonal_sigma: true,
        ..Default::default()
    };
    let fit = vgmm_fit(&x, &d, &opts).unwrap();
    let th = fit.theta();
    for j in 0..k {
        let col: Vec<f64> = x.column(j).iter().copied().collect();
        let est = mem::estimate(&col, &d, &MemOptions::default()).unwrap();
        let block = &th[j * (k + 2)..(j + 1) * (k + 2)];
        let uni = [block[0], block[1 + j], block[k + 1]];
        for (a, b) in uni.iter().zip(est.params.theta()) {
            assert!((a - b).abs() < 1e-6, "series {j}: {a} vs {b}");
        }
    }
    assert_eq!(th[alpha_index(k, 0, 1)], 0.0);
    assert_eq!(fit.std_errors()[alpha_index(k, 1, 0)], 0.0);
}

#[test]
fn unrestricted_fit_properties() {
    let (x, d) = rescaled_panel(6, 3000);
    let fit = vgmm_fit(&x, &d, &VMemOptions::default()).unwrap();
    assert!(fit.criterion.iter().all(|v| v.abs() < 1e-6));
    let s = DMatrix::from_fn(2, 2, |i, j| fit.sigma2[i][j]);
    assert_eq!(s, s.transpose());
    assert!(s.symmetric_eigenvalues().iter().all(|e| *e >= 0.0));
    let (sd, rho) = fit.sigma_and_rho();
    assert!(sd.iter().all(|v| *v > 0.0));
    assert!(rho.iter().all(|r| (-1.0..=1.0).contains(r)));
    let v = DMatrix::from_fn(8, 8, |i, j| fit.avar[i][j]);
    assert!((&v - v.transpose()).amax() < 1e-12);
    assert!(v.symmetric_eigenvalues().iter().all(|e| *e > 0.0));
    // truth inside a generous band
    for (a, b) in fit.theta().iter().zip(common::bivariate_params().theta()) {
        assert!((a - b).abs() < 0.1, "{a} vs {b}");
    }
}

#[test]
fn vector_model_rejects_single_series_and_short_panels() {
    let (x, d) = rescaled_panel(7, 300);
    let one = x.columns(0, 1).into_owned();
    assert!(matches!(vgmm_fit(&one, &d, &VMemOptions::default()), Err(Error::InvalidArgument(_))));
    let short = x.rows(0, 150).into_owned();
    assert!(matches!(vgmm_fit(&short, &d[..150], &VMemOptions::default()), Err(Error::TooShort { .. })));
}

#[test]
fn wald_arithmetic() {
    let w = wald_from_statistic(12.3104, 3).unwrap();
    assert!((w.pvalue - 0.0064).abs() < 1e-4, "{}", w.pvalue);
    let w4 = wald_from_statistic(12.3104, 4).unwrap();
    // chi-square(4) survival function in closed form: e^{-x/2}(1 + x/2)
    let oracle = (-12.3104f64 / 2.0).exp() * (1.0 + 12.3104 / 2.0);
    assert!((w4.pvalue - oracle).abs() < 1e-12);
    assert!((w4.pvalue - 0.0152).abs() < 1e-4);
}

#[test]
fn wald_on_fit() {
    let sim = simulate(&common::bivariate_dgp([0.2, 0.1], 0.5, TauProfile::Constant, 8), 2000).unwrap();
    let mut fit = fit_base_vmem(&sim.panel, &VMemOptions::default()).unwrap();
    let idx = heavy_restriction(2);
    assert_eq!(idx, vec![1, 3, 5]);
    let w = wald_test(&fit, &idx, idx.len()).unwrap();
    assert!(w.statistic > 0.0 && w.pvalue < 0.01);
    // zero estimates give W = 0 and p = 1
    if let Params::Vec(p) = &fit.params {
        let mut th = p.theta();
        for &i in &idx {
            th[i] = 0.0;
        }
        fit.params = Params::Vec(VecParams::from_theta(2, &th).unwrap());
    }
    let w = wald_test(&fit, &idx, 3).unwrap();
    assert_eq!(w.statistic, 0.0);
    assert_eq!(w.pvalue, 1.0);
    // singular covariance block
    fit.avar[1] = vec![0.0; 8];
    for r in fit.avar.iter_mut() {
        r[1] = 0.0;
    }
    assert!(matches!(wald_test(&fit, &idx, 3), Err(Error::SingularSubmatrix)));
}

#[test]
fn vector_forecast_decays_at_spectral_radius() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    // persistence with spectral radius 0.95 and a real dominant eigenvalue
    let alpha = DMatrix::from_row_slice(2, 2, &[0.2, 0.1, 0.05, 0.15]);
    let beta = vec![0.7, 0.72];
    let p = VecParams::new(beta, alpha, vec![0.0, 0.0]).unwrap();
    let star = p.persistence();
    let rho = p.spectral_radius();
    let xi_t = [rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0)];
    let x_t = [rng.gen_range(0.0..3.0), rng.gen_range(0.0..3.0)];
    let path = vforecast(&p, &xi_t, &x_t, 1.0, 400).unwrap();
    let first = nalgebra::DVector::from_vec(path[0].iter().map(|v| v - 1.0).collect());
    let mut power = DMatrix::identity(2, 2);
    for (h, f) in path.iter().enumerate() {
        let dev = nalgebra::DVector::from_vec(f.iter().map(|v| v - 1.0).collect());
        let closed = &power * &first;
        assert!((&dev - &closed).amax() < 1e-12);
        power = &star * power;
        if h > 100 && h < 300 {
            let prev = nalgebra::DVector::from_vec(path[h - 1].iter().map(|v| v - 1.0).collect());
            assert!((dev.norm() / prev.norm() - rho).abs() < 1e-6);
        }
    }
    // K = 1 reduces to the univariate forecast
    let u = UniParams::from_persistence(0.9, 0.1, 0.1).unwrap();
    let v = VecParams::new(vec![u.beta1()], DMatrix::from_element(1, 1, u.alpha1()), vec![u.gamma1()]).unwrap();
    let a = mem::forecast_path(&u, 1.2, 0.7, 1.0, 20).unwrap();
    let b = vforecast(&v, &[1.2], &[0.7], 1.0, 20).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y[0]).abs() < 1e-14);
    }
}
