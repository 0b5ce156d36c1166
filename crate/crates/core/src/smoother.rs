//! Nadaraya–Watson smoothing of the low-frequency component on the rescaled
//! time axis `z_t = t / T`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Trading days per month used to convert bandwidths given in months.
pub const TRADING_DAYS_PER_MONTH: usize = 21;
pub const MIN_BANDWIDTH_DAYS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Kernel {
    #[default]
    Gaussian,
    Epanechnikov,
}

impl Kernel {
    pub fn eval(self, u: f64) -> f64 {
        match self {
            Kernel::Gaussian => (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt(),
            Kernel::Epanechnikov => {
                if u.abs() <= 1.0 {
                    0.75 * (1.0 - u * u)
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmootherConfig {
    bandwidth_days: usize,
    kernel: Kernel,
}

impl SmootherConfig {
    pub fn new(bandwidth_days: usize, kernel: Kernel) -> Result<Self> {
        if bandwidth_days < MIN_BANDWIDTH_DAYS {
            return Err(Error::InvalidArgument(format!(
                "bandwidth must be at least {MIN_BANDWIDTH_DAYS} trading days, got {bandwidth_days}"
            )));
        }
        Ok(SmootherConfig { bandwidth_days, kernel })
    }

    /// Gaussian kernel with bandwidth given in months of 21 trading days.
    pub fn from_months(months: f64) -> Result<Self> {
        if !(months > 0.0) {
            return Err(Error::InvalidArgument(format!("bandwidth must be positive, got {months} months")));
        }
        Self::new((months * TRADING_DAYS_PER_MONTH as f64).round() as usize, Kernel::Gaussian)
    }

    pub fn bandwidth_days(&self) -> usize {
        self.bandwidth_days
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }
}

/// Nadaraya–Watson estimate without the unit-mean normalization.
///
/// Weights `K((z_t - z_s)/h)` depend on `|t - s|` only, so the kernel is
/// evaluated once per lag and reused across rows.
pub fn nw_smooth_raw(targets: &[f64], config: &SmootherConfig) -> Result<Vec<f64>> {
    let n = targets.len();
    if n < 2 {
        return Err(Error::InvalidArgument("at least two observations are needed to smooth".into()));
    }
    if let Some(i) = targets.iter().position(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidArgument(format!("smoothing target {i} is negative or not finite")));
    }
    let bw = config.bandwidth_days as f64;
    let tf = n as f64;
    let h = bw / tf;
    let weights: Vec<f64> = (0..n).map(|d| config.kernel.eval((d as f64 / tf) / h)).collect();
    (0..n)
        .into_par_iter()
        .map(|t| {
            let mut num = 0.0;
            let mut den = 0.0;
            for (s, &x) in targets.iter().enumerate() {
                let w = weights[t.abs_diff(s)];
                num += x * w;
                den += w;
            }
            if den > 0.0 && den.is_finite() {
                Ok(num / den)
            } else {
                Err(Error::DegenerateWeights { row: t })
            }
        })
        .collect()
}

/// Smoothed low-frequency component, rescaled to unit sample mean.
pub fn nw_smooth(targets: &[f64], config: &SmootherConfig) -> Result<Vec<f64>> {
    let raw = nw_smooth_raw(targets, config)?;
    normalize_unit_mean(raw)
}

pub fn normalize_unit_mean(mut v: Vec<f64>) -> Result<Vec<f64>> {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    if !(mean > 0.0) {
        return Err(Error::InvalidArgument("smoothed component has non-positive mean".into()));
    }
    v.iter_mut().for_each(|x| *x /= mean);
    Ok(v)
}

/// Cross-sectional average of the rescaled series `x_{j,t} / (mu_j xi_{j,t})`
/// with weights proportional to `1 / sigma_j^2`.
pub fn precision_weighted_target(scaled: &DMatrix<f64>, sigma_diag: &[f64]) -> Result<Vec<f64>> {
    if scaled.ncols() != sigma_diag.len() {
        return Err(Error::InvalidArgument("variance vector length differs from panel width".into()));
    }
    if let Some(j) = sigma_diag.iter().position(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(Error::ZeroVariance { index: j });
    }
    let w = precision_weights(sigma_diag);
    Ok((0..scaled.nrows())
        .map(|t| w.iter().enumerate().map(|(j, wj)| scaled[(t, j)] * wj).sum())
        .collect())
}

/// `sigma_j^-2 / sum_k sigma_k^-2`
pub fn precision_weights(sigma_diag: &[f64]) -> Vec<f64> {
    let inv: Vec<f64> = sigma_diag.iter().map(|s| 1.0 / s).collect();
    let total: f64 = inv.iter().sum();
    inv.iter().map(|v| v / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force(targets: &[f64], bw: usize, kernel: Kernel) -> Vec<f64> {
        let n = targets.len() as f64;
        let h = bw as f64 / n;
        (1..=targets.len())
            .map(|t| {
                let zt = t as f64 / n;
                let (mut num, mut den) = (0.0, 0.0);
                for (s0, x) in targets.iter().enumerate() {
                    let zs = (s0 + 1) as f64 / n;
                    let k = kernel.eval((zt - zs) / h);
                    num += x * k;
                    den += k;
                }
                num / den
            })
            .collect()
    }

    #[test]
    fn constant_targets_give_unit_component() {
        let cfg = SmootherConfig::new(20, Kernel::Gaussian).unwrap();
        let tau = nw_smooth(&vec![3.7; 200], &cfg).unwrap();
        assert!(tau.iter().all(|t| (t - 1.0).abs() < 1e-14));
    }

    #[test]
    fn huge_bandwidth_flattens() {
        let n = 400;
        let targets: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * ((i * 7919) % 13) as f64 / 13.0).collect();
        let cfg = SmootherConfig::new(10 * n, Kernel::Gaussian).unwrap();
        let tau = nw_smooth(&targets, &cfg).unwrap();
        let dev = tau.iter().map(|t| (t - 1.0).abs()).fold(0.0, f64::max);
        assert!(dev < 1e-3, "max deviation {dev}");
    }

    #[test]
    fn ramp_matches_brute_force() {
        let n = 500;
        let ramp: Vec<f64> = (1..=n).map(|i| i as f64).collect();
        for kernel in [Kernel::Gaussian, Kernel::Epanechnikov] {
            let cfg = SmootherConfig::new(40, kernel).unwrap();
            let fast = nw_smooth_raw(&ramp, &cfg).unwrap();
            let slow = brute_force(&ramp, 40, kernel);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() <= 1e-12 * b.abs(), "{a} vs {b}");
            }
            // interior points of a linear ramp are reproduced exactly by a symmetric kernel
            assert!((fast[250] - 251.0).abs() < 1e-6);
        }
    }

    #[test]
    fn unit_mean_and_scale_invariance() {
        let targets: Vec<f64> = (0..300).map(|i| 1.0 + (i as f64 / 40.0).sin().abs()).collect();
        let cfg = SmootherConfig::new(25, Kernel::Gaussian).unwrap();
        let a = nw_smooth(&targets, &cfg).unwrap();
        let scaled: Vec<f64> = targets.iter().map(|x| 17.0 * x).collect();
        let b = nw_smooth(&scaled, &cfg).unwrap();
        let mean = a.iter().sum::<f64>() / a.len() as f64;
        assert!((mean - 1.0).abs() < 1e-12);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn bandwidth_floor() {
        assert!(SmootherConfig::new(4, Kernel::Gaussian).is_err());
        assert_eq!(SmootherConfig::from_months(6.0).unwrap().bandwidth_days(), 126);
    }

    #[test]
    fn precision_weights_hand_example() {
        let m = DMatrix::from_row_slice(1, 2, &[2.0, 6.0]);
        let w = precision_weights(&[1.0, 4.0]);
        assert!((w[0] - 0.8).abs() < 1e-15 && (w[1] - 0.2).abs() < 1e-15);
        let x = precision_weighted_target(&m, &[1.0, 4.0]).unwrap();
        assert!((x[0] - 2.8).abs() < 1e-14);
    }

    #[test]
    fn precision_target_reductions() {
        let m = DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 3.0]);
        assert_eq!(precision_weighted_target(&m, &[0.3]).unwrap(), vec![1.0, 2.0, 3.0]);
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 9.0]);
        let x = precision_weighted_target(&m, &[0.5, 0.5, 0.5]).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-15 && (x[1] - 6.0).abs() < 1e-14);
        assert!(matches!(precision_weighted_target(&m, &[0.5, 0.0, 0.5]), Err(Error::ZeroVariance { index: 1 })));
    }
}
