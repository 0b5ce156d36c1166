//! Data-generating processes for every model variant.
//!
//! Draws are reproducible: one `ChaCha8Rng` per simulation, seeded from the
//! spec. Replication `r` of a study with master seed `s` uses the seed
//! `replication_seed(s, r)`, a SplitMix64 output, so replications are
//! independent of scheduling order.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{panel_from_matrix, AlignedPanel, Date, ObservationSeries, Params};
use crate::dist::DistSpec;
use crate::error::{Error, Result};
use crate::special::normal_cdf;

pub const MIN_SIM_OBS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TauProfile {
    Constant,
    /// `1 + amplitude cos(2 pi periods t / T + phase)`, `t = 1..T`.
    Sinusoid { amplitude: f64, periods: f64, phase: f64 },
    /// Linear interpolation between `(z, level)` knots on `z = t / T`,
    /// constant beyond the outer knots.
    PiecewiseLinear { knots: Vec<(f64, f64)> },
}

impl TauProfile {
    /// The path rescaled to unit sample mean.
    pub fn path(&self, n: usize) -> Result<Vec<f64>> {
        let nf = n as f64;
        let raw: Vec<f64> = match self {
            TauProfile::Constant => vec![1.0; n],
            TauProfile::Sinusoid { amplitude, periods, phase } => {
                if !(amplitude.abs() < 1.0) {
                    return Err(Error::InvalidSpec(format!("sinusoid amplitude {amplitude} must be below 1")));
                }
                (1..=n).map(|t| 1.0 + amplitude * (2.0 * PI * periods * t as f64 / nf + phase).cos()).collect()
            }
            TauProfile::PiecewiseLinear { knots } => {
                if knots.is_empty() || knots.windows(2).any(|w| w[1].0 <= w[0].0) || knots.iter().any(|k| !(k.1 > 0.0)) {
                    return Err(Error::InvalidSpec("knots need increasing abscissae and positive levels".into()));
                }
                (1..=n).map(|t| interpolate(knots, t as f64 / nf)).collect()
            }
        };
        let mean = raw.iter().sum::<f64>() / nf;
        Ok(raw.into_iter().map(|v| v / mean).collect())
    }
}

fn interpolate(knots: &[(f64, f64)], z: f64) -> f64 {
    if z <= knots[0].0 {
        return knots[0].1;
    }
    for w in knots.windows(2) {
        let ((z0, y0), (z1, y1)) = (w[0], w[1]);
        if z <= z1 {
            return y0 + (y1 - y0) * (z - z0) / (z1 - z0);
        }
    }
    knots[knots.len() - 1].1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub params: Params,
    pub mu: Vec<f64>,
    pub tau: TauProfile,
    /// Unit-mean error law per series.
    pub errors: Vec<DistSpec>,
    /// Correlation of the Gaussian draws mapped through the marginal quantiles.
    #[serde(default)]
    pub dependence: Option<DMatrix<f64>>,
    #[serde(default = "default_neg_prob")]
    pub neg_prob: f64,
    pub seed: u64,
}

fn default_neg_prob() -> f64 {
    0.5
}

impl DgpSpec {
    pub fn n_series(&self) -> usize {
        self.mu.len()
    }

    fn validate(&self) -> Result<Option<DMatrix<f64>>> {
        let k = self.n_series();
        if k == 0 || self.params.dim() != k || self.errors.len() != k {
            return Err(Error::InvalidSpec("mu, params and errors must agree on the number of series".into()));
        }
        if self.mu.iter().any(|m| !(*m > 0.0 && m.is_finite())) {
            return Err(Error::InvalidSpec("mu must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.neg_prob) {
            return Err(Error::InvalidSpec(format!("neg_prob {} outside [0, 1]", self.neg_prob)));
        }
        for e in &self.errors {
            if !((e.mean() - 1.0).abs() < 1e-8) {
                return Err(Error::InvalidSpec(format!("error law {e:?} does not have unit mean")));
            }
        }
        match &self.dependence {
            None => Ok(None),
            Some(c) => {
                if c.nrows() != k || c.ncols() != k {
                    return Err(Error::InvalidSpec("dependence matrix has the wrong size".into()));
                }
                if (0..k).any(|i| (c[(i, i)] - 1.0).abs() > 1e-12) || (c - c.transpose()).amax() > 1e-12 {
                    return Err(Error::InvalidSpec("dependence must be symmetric with unit diagonal".into()));
                }
                let l = c.clone().cholesky().ok_or_else(|| Error::InvalidSpec("dependence is not positive definite".into()))?;
                Ok(Some(l.l()))
            }
        }
    }
}

/// Simulated observations with the true components.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub panel: AlignedPanel,
    pub tau: Vec<f64>,
    /// T x K
    pub xi: DMatrix<f64>,
    /// T x K
    pub eps: DMatrix<f64>,
}

impl SimOutput {
    pub fn series(&self, j: usize) -> ObservationSeries {
        self.panel.series(j)
    }
}

pub fn sim_dates(n: usize) -> Vec<Date> {
    Date::sequence(Date::parse_iso("2000-01-03").expect("valid literal"), n)
}

/// Draw `T` periods from the process `x_t = mu tau_t xi_t eps_t`.
pub fn simulate(spec: &DgpSpec, n: usize) -> Result<SimOutput> {
    if n < MIN_SIM_OBS {
        return Err(Error::InvalidSpec(format!("at least {MIN_SIM_OBS} periods required, got {n}")));
    }
    let chol = spec.validate()?;
    let k = spec.n_series();
    let tau = spec.tau.path(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut eps = DMatrix::zeros(n, k);
    let mut neg = vec![0.0; n];
    let mut z = vec![0.0; k];
    for t in 0..n {
        match &chol {
            None => {
                for j in 0..k {
                    eps[(t, j)] = spec.errors[j].sample(&mut rng);
                }
            }
            Some(l) => {
                for zj in z.iter_mut() {
                    *zj = rng.sample::<f64, _>(rand_distr::StandardNormal);
                }
                for j in 0..k {
                    let c: f64 = (0..=j).map(|m| l[(j, m)] * z[m]).sum();
                    let u = normal_cdf(c).clamp(1e-300, 1.0 - 1e-16);
                    eps[(t, j)] = spec.errors[j].quantile(u);
                }
            }
        }
        neg[t] = if rng.gen::<f64>() < spec.neg_prob { 1.0 } else { 0.0 };
    }

    let (omega, beta, alpha, gamma) = coefficients(&spec.params);
    let mut xi = DMatrix::from_element(n, k, 1.0);
    for t in 1..n {
        for i in 0..k {
            let mut v = omega[i] + beta[i] * xi[(t - 1, i)] + gamma[i] * xi[(t - 1, i)] * eps[(t - 1, i)] * neg[t - 1];
            for j in 0..k {
                v += alpha[(i, j)] * xi[(t - 1, j)] * eps[(t - 1, j)];
            }
            if !(v > 0.0) {
                return Err(Error::NonPositiveXi { row: t, series: i });
            }
            xi[(t, i)] = v;
        }
    }
    let values = DMatrix::from_fn(n, k, |t, j| spec.mu[j] * tau[t] * xi[(t, j)] * eps[(t, j)]);
    let returns: Vec<f64> = neg.iter().map(|d| if *d > 0.0 { -0.01 } else { 0.01 }).collect();
    let labels = (1..=k).map(|j| format!("x{j}")).collect();
    let panel = panel_from_matrix(labels, sim_dates(n), values, returns)?;
    Ok(SimOutput { panel, tau, xi, eps })
}

fn coefficients(p: &Params) -> (Vec<f64>, Vec<f64>, DMatrix<f64>, Vec<f64>) {
    match p {
        Params::Uni(u) => (
            vec![u.intercept()],
            vec![u.beta1()],
            DMatrix::from_element(1, 1, u.alpha1()),
            vec![u.gamma1()],
        ),
        Params::Vec(v) => (v.intercept(), v.beta1_diag().to_vec(), v.alpha1().clone(), v.gamma1_diag().to_vec()),
    }
}

/// SplitMix64 output for `(master, replication)`.
pub fn replication_seed(master: u64, replication: u64) -> u64 {
    let mut z = master.wrapping_add(replication.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::UniParams;
    use crate::dist::{calibrate, DistKind};

    fn spec(sigma2: f64) -> DgpSpec {
        DgpSpec {
            params: Params::Uni(UniParams::from_persistence(0.9, 0.1, 0.1).unwrap()),
            mu: vec![10.0],
            tau: TauProfile::Sinusoid { amplitude: 0.3, periods: 1.0, phase: 0.0 },
            errors: vec![calibrate(DistKind::Gamma, sigma2).unwrap()],
            dependence: None,
            neg_prob: 0.5,
            seed: 7,
        }
    }

    #[test]
    fn deterministic() {
        let a = simulate(&spec(0.2), 500).unwrap();
        let b = simulate(&spec(0.2), 500).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn degenerate_noise() {
        let s = simulate(&spec(1e-8), 1000).unwrap();
        let x = s.panel.values();
        for t in 0..1000 {
            let r = x[(t, 0)] / (10.0 * s.tau[t] * s.xi[(t, 0)]);
            assert!((r - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn tau_unit_mean() {
        for p in [
            TauProfile::Constant,
            TauProfile::Sinusoid { amplitude: 0.3, periods: 2.0, phase: 0.4 },
            TauProfile::PiecewiseLinear { knots: vec![(0.0, 1.0), (0.5, 2.0), (1.0, 0.5)] },
        ] {
            let t = p.path(777).unwrap();
            assert!((t.iter().sum::<f64>() / 777.0 - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn seeds_differ() {
        assert_ne!(replication_seed(1, 0), replication_seed(1, 1));
        assert_ne!(replication_seed(1, 0), replication_seed(2, 0));
    }
}
