use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use memkit::{FitResult, Params};

fn memkit(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_memkit"))
        .args(args)
        .current_dir(cwd)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = memkit(args, cwd);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn read_csv(p: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(p).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}

fn simulated(dir: &Path, n: usize, seed: u64) -> PathBuf {
    ok(&["simulate", "-n", &n.to_string(), "--seed", &seed.to_string(), "--out", "sim"], dir);
    dir.join("sim/simulated.csv")
}

#[test]
fn fit_writes_parseable_outputs() {
    let dir = tempfile::tempdir().unwrap();
    simulated(dir.path(), 1500, 3);
    ok(&["fit", "-i", "sim/simulated.csv", "--kind", "mem", "--lags", "5,10", "--out", "fit"], dir.path());
    let fit: FitResult = serde_json::from_str(&std::fs::read_to_string(dir.path().join("fit/fit.json")).unwrap()).unwrap();
    assert_eq!(fit.n_obs(), 1500);
    assert!(fit.diagnostics.is_some());
    let est: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("fit/estimates.json")).unwrap()).unwrap();
    let names: Vec<&str> = est.as_array().unwrap().iter().map(|r| r["parameter"].as_str().unwrap()).collect();
    assert_eq!(names, ["beta*", "alpha", "gamma", "sigma", "R2", "LB(5) p-value", "LB(10) p-value"]);
    let (h, rows) = read_csv(&dir.path().join("fit/components.csv"));
    assert_eq!(h, ["date", "x_x1", "mu_x1", "mu_tau_x1", "mu_tau_xi_x1"]);
    assert_eq!(rows.len(), 1500);
    let (_, res) = read_csv(&dir.path().join("fit/residuals.csv"));
    assert_eq!(res.len(), 1500);
}

#[test]
fn failing_run_leaves_no_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = memkit(&["fit", "-i", "missing.csv", "--kind", "mem", "--out", "res"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.csv"));
    assert!(!dir.path().join("res").exists());

    // a failure after the output directory exists must not leave staged files either
    let data = simulated(dir.path(), 600, 1);
    std::fs::create_dir(dir.path().join("res")).unwrap();
    let out = memkit(&["fit", "-i", data.to_str().unwrap(), "--kind", "spmem", "--out", "res"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(std::fs::read_dir(dir.path().join("res")).unwrap().count(), 0);
}

#[test]
fn simulate_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    simulated(a.path(), 800, 42);
    simulated(b.path(), 800, 42);
    for f in ["simulated.csv", "truth.csv", "dgp.json"] {
        let x = std::fs::read(a.path().join("sim").join(f)).unwrap();
        let y = std::fs::read(b.path().join("sim").join(f)).unwrap();
        assert_eq!(x, y, "{f} differs");
    }
    let c = tempfile::tempdir().unwrap();
    simulated(c.path(), 800, 43);
    assert_ne!(std::fs::read(a.path().join("sim/simulated.csv")).unwrap(), std::fs::read(c.path().join("sim/simulated.csv")).unwrap());
}

#[test]
fn simulate_then_fit_recovers_parameters() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        &["simulate", "-n", "6000", "--seed", "11", "--persistence", "0.92", "--alpha", "0.08", "--gamma", "0.06", "--out", "sim"],
        dir.path(),
    );
    ok(&["fit", "-i", "sim/simulated.csv", "--kind", "mem", "--out", "fit"], dir.path());
    let fit: FitResult = serde_json::from_str(&std::fs::read_to_string(dir.path().join("fit/fit.json")).unwrap()).unwrap();
    let Params::Uni(p) = &fit.params else { panic!("univariate fit expected") };
    assert!((p.persistence() - 0.92).abs() < 0.03, "beta* {}", p.persistence());
    assert!((p.alpha1() - 0.08).abs() < 0.03, "alpha {}", p.alpha1());
    assert!((p.gamma1() - 0.06).abs() < 0.03, "gamma {}", p.gamma1());
}

#[test]
fn gof_reports_eight_rows_per_series() {
    let dir = tempfile::tempdir().unwrap();
    simulated(dir.path(), 1000, 5);
    ok(&["fit", "-i", "sim/simulated.csv", "--kind", "mem", "--out", "fit"], dir.path());
    ok(&["gof", "-i", "fit/residuals.csv", "--out", "gof"], dir.path());
    let (h, rows) = read_csv(&dir.path().join("gof/gof.csv"));
    assert_eq!(h, ["series", "test", "distribution", "statistic", "pvalue", "n_used", "n_excluded"]);
    assert_eq!(rows.len(), 8);
    for r in &rows {
        let p: f64 = r[4].parse().unwrap();
        assert!((0.0..=1.0).contains(&p));
        assert_eq!(r[5], "1000");
    }
}

#[test]
fn forecast_matches_one_step_and_reverts() {
    let dir = tempfile::tempdir().unwrap();
    simulated(dir.path(), 1500, 9);
    ok(&["fit", "-i", "sim/simulated.csv", "--kind", "mem", "--out", "fit"], dir.path());
    ok(&["forecast", "-i", "sim/simulated.csv", "--fit", "fit/fit.json", "--horizons", "200", "--out", "fc"], dir.path());
    let fit: FitResult = serde_json::from_str(&std::fs::read_to_string(dir.path().join("fit/fit.json")).unwrap()).unwrap();
    let Params::Uni(p) = &fit.params else { panic!() };
    let (_, data) = read_csv(&dir.path().join("sim/simulated.csv"));
    let last_ret: f64 = data.last().unwrap()[2].parse().unwrap();
    let neg = if last_ret < 0.0 { 1.0 } else { 0.0 };
    let t = fit.n_obs() - 1;
    let xi = fit.xi[t][0];
    let x = xi * fit.residuals[t][0];
    let level = fit.mu[0] * fit.tau[t];
    let one_step = level * (p.intercept() + p.beta1() * xi + p.alpha1() * x + p.gamma1() * x * neg);

    let (_, rows) = read_csv(&dir.path().join("fc/forecast.csv"));
    assert_eq!(rows.len(), 200);
    let f1: f64 = rows[0][1].parse().unwrap();
    assert!((f1 - one_step).abs() < 1e-9 * one_step, "{f1} vs {one_step}");
    let f200: f64 = rows[199][1].parse().unwrap();
    assert!((f200 - level).abs() < 1e-3 * level, "{f200} vs {level}");

    // estimating inside forecast gives the same numbers
    ok(&["forecast", "-i", "sim/simulated.csv", "--kind", "mem", "--horizons", "1", "--out", "fc2"], dir.path());
    let (_, rows) = read_csv(&dir.path().join("fc2/forecast.csv"));
    let g1: f64 = rows[0][1].parse().unwrap();
    assert!((g1 - f1).abs() < 1e-9 * f1);
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["forecast", "-i", "x.csv", "--kind", "mem", "--horizons", "0"][..],
        &["simulate", "--sigma2", "0"],
        &["simulate", "--sigma2=-1"],
        &["fit", "--kind", "garch"],
        &["fit", "--lags", "0,5"],
    ] {
        let out = memkit(args, dir.path());
        assert_eq!(out.status.code(), Some(2), "{args:?}");
    }
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn univariate_kind_rejects_several_columns() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("two.csv");
    let mut body = String::from("date,a,b,return\n");
    for m in 1..=3 {
        for d in 1..=28 {
            body.push_str(&format!("2020-{m:02}-{d:02},{},{},0.01\n", 1.0 + d as f64 * 0.01, 2.0 + m as f64 * 0.1));
        }
    }
    std::fs::write(&path, body).unwrap();
    let out = memkit(&["fit", "-i", "two.csv", "--kind", "mem", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--columns"));
}
