mod common;

use memkit::data::{validate_panel, Date, ObservationSeries, UniParams, VecParams};
use memkit::dist::{calibrate, DistKind, DistSpec};
use memkit::sim::{simulate, TauProfile};
use memkit::spfit::fit_base_mem;
use memkit::{Error, FitResult};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn round_trip<T: serde::Serialize + serde::de::DeserializeOwned>(v: &T) -> T {
    serde_json::from_str(&serde_json::to_string(v).unwrap()).unwrap()
}

proptest! {
    #[test]
    fn uni_params_round_trip(star in 0.0f64..0.999, alpha in -0.5f64..0.5, gamma in -0.5f64..0.5) {
        let p = UniParams::from_persistence(star, alpha, gamma).unwrap();
        let q: UniParams = round_trip(&p);
        prop_assert_eq!(p.theta(), q.theta());
    }

    #[test]
    fn uni_params_never_clamped(beta in -1.0f64..1.5, alpha in -0.5f64..0.8, gamma in -0.5f64..0.8) {
        let star = beta + alpha + gamma / 2.0;
        match UniParams::new(beta, alpha, gamma) {
            Ok(p) => {
                prop_assert!((0.0..1.0).contains(&star));
                prop_assert_eq!(p.theta(), [beta, alpha, gamma]);
            }
            Err(e) => {
                prop_assert!(!(0.0..1.0).contains(&star));
                prop_assert!(matches!(e, Error::NonStationary(_)), "unexpected error {:?}", e);
            }
        }
    }

    #[test]
    fn vec_params_round_trip(vals in prop::collection::vec(-0.2f64..0.3, 15)) {
        let k = 3;
        let beta: Vec<f64> = vals[0..3].iter().map(|v| 0.5 + v).collect();
        let alpha = DMatrix::from_row_slice(k, k, &vals[3..12]) * 0.3;
        let gamma = vals[12..15].to_vec();
        if let Ok(p) = VecParams::new(beta, alpha, gamma) {
            let q: VecParams = round_trip(&p);
            prop_assert_eq!(&p, &q);
            prop_assert!(p.spectral_radius() < 1.0);
        }
    }

    #[test]
    fn series_round_trip(vals in prop::collection::vec(0.0f64..1e3, 1..60), ret in -0.1f64..0.1) {
        let n = vals.len();
        let dates = Date::sequence(Date::parse_iso("1999-12-30").unwrap(), n);
        let s = ObservationSeries::new("rkVol", dates, vals, vec![ret; n]).unwrap();
        let back: ObservationSeries = round_trip(&s);
        prop_assert_eq!(s, back);
    }

    #[test]
    fn dist_spec_round_trip(sigma2 in 0.01f64..1.5) {
        for kind in DistKind::ALL {
            let spec = calibrate(kind, sigma2).unwrap();
            let back: DistSpec = round_trip(&spec);
            prop_assert_eq!(spec, back);
        }
    }
}

#[test]
fn invalid_json_is_rejected_not_clamped() {
    assert!(serde_json::from_str::<UniParams>(r#"{"beta1":0.9,"alpha1":0.2,"gamma1":0.0}"#).is_err());
    let bad = r#"{"label":"x","dates":["2020-01-02","2020-01-01"],"values":[1.0,2.0],"returns":[0.0,0.0]}"#;
    assert!(serde_json::from_str::<ObservationSeries>(bad).is_err());
}

#[test]
fn fit_result_round_trip_is_exact() {
    let spec = common::uni_dgp(0.9, 0.1, 0.1, 0.2, TauProfile::Constant, 21);
    let sim = simulate(&spec, 600).unwrap();
    let fit = fit_base_mem(&sim.series(0), &Default::default()).unwrap();
    let back: FitResult = round_trip(&fit);
    assert_eq!(fit, back);
}

#[test]
fn fit_result_invariants() {
    let spec = common::uni_dgp(0.9, 0.1, 0.1, 0.2, TauProfile::Constant, 22);
    let sim = simulate(&spec, 2000).unwrap();
    let fit = fit_base_mem(&sim.series(0), &Default::default()).unwrap();
    // avar symmetric positive definite
    let v = DMatrix::from_fn(3, 3, |i, j| fit.avar[i][j]);
    assert!((&v - v.transpose()).amax() < 1e-15);
    assert!(v.clone().cholesky().is_some());
    assert!(fit.std_errors().iter().all(|s| *s > 0.0));
    // the first moment equation is the `a_t`-weighted residual mean; the
    // plain mean of the residuals stays near one
    let r = fit.residual_series(0);
    let m = r.iter().sum::<f64>() / r.len() as f64;
    assert!((m - 1.0).abs() < 0.02, "residual mean {m}");
}

#[test]
fn panel_takes_first_returns_and_intersection() {
    let a = ObservationSeries::new(
        "a",
        Date::sequence(Date::parse_iso("2000-01-01").unwrap(), 120),
        (0..120).map(|i| i as f64).collect(),
        (0..120).map(|i| if i % 2 == 0 { -1.0 } else { 1.0 }).collect(),
    )
    .unwrap();
    let b = ObservationSeries::new(
        "b",
        Date::sequence(Date::parse_iso("2000-02-01").unwrap(), 120),
        vec![1.0; 120],
        vec![5.0; 120],
    )
    .unwrap();
    let p = validate_panel(&[a, b]).unwrap();
    assert_eq!(p.n_obs(), 120 - 31);
    assert_eq!(p.column(0)[0], 31.0);
    assert_eq!(p.returns()[0], 1.0);
    assert!(matches!(validate_panel(&[]), Err(Error::NoSeries)));
}
