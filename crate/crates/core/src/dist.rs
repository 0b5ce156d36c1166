//! Unit-mean error densities calibrated from a residual variance, and
//! Anderson–Darling / Cramér–von Mises goodness-of-fit tests against them.

use std::f64::consts::PI;
use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Gamma as GammaSampler, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{beta_inc, bessel_k, gamma_p, gamma_q, ln_beta, ln_gamma, normal_cdf, normal_quantile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DistKind {
    Gamma,
    LogNormal,
    BetaPrime,
    LogLogistic,
}

impl DistKind {
    pub const ALL: [DistKind; 4] = [DistKind::Gamma, DistKind::LogNormal, DistKind::BetaPrime, DistKind::LogLogistic];

    pub fn short_name(self) -> &'static str {
        match self {
            DistKind::Gamma => "Gamma",
            DistKind::LogNormal => "Log-N",
            DistKind::BetaPrime => "Beta'",
            DistKind::LogLogistic => "Log-L",
        }
    }
}

impl fmt::Display for DistKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

/// A calibrated density on the positive half-line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum DistSpec {
    /// density `rate^shape / Gamma(shape) x^(shape-1) exp(-rate x)`
    Gamma { shape: f64, rate: f64 },
    /// `ln x ~ N(m, v)`
    LogNormal { m: f64, v: f64 },
    /// density `x^(alpha-1) (1+x)^-(alpha+beta) / B(alpha, beta)`
    BetaPrime { alpha: f64, beta: f64 },
    /// density `(shape/scale) (x/scale)^(shape-1) / (1 + (x/scale)^shape)^2`
    LogLogistic { scale: f64, shape: f64 },
}

/// Bracket for the log-logistic shape parameter. The variance only exists
/// for shape > 2.
pub const LOGLOGISTIC_SHAPE_MIN: f64 = 2.0 + 1e-6;
pub const LOGLOGISTIC_SHAPE_MAX: f64 = 200.0;

/// Variance of the unit-mean log-logistic with shape `b`:
/// `tan(pi/b) / (pi/b) - 1`.
pub fn loglogistic_variance(shape: f64) -> f64 {
    let b = PI / shape;
    b.tan() / b - 1.0
}

fn loglogistic_shape(sigma2: f64) -> Result<f64> {
    let (mut lo, mut hi) = (LOGLOGISTIC_SHAPE_MIN, LOGLOGISTIC_SHAPE_MAX);
    // variance is strictly decreasing in the shape
    if !(sigma2 <= loglogistic_variance(lo) && sigma2 >= loglogistic_variance(hi)) {
        return Err(Error::UnattainableVariance(sigma2));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if loglogistic_variance(mid) > sigma2 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 * mid {
            break;
        }
    }
    // Newton polish on the smooth map
    let mut b = 0.5 * (lo + hi);
    for _ in 0..3 {
        let h = 1e-7 * b;
        let d = (loglogistic_variance(b + h) - loglogistic_variance(b - h)) / (2.0 * h);
        let step = (loglogistic_variance(b) - sigma2) / d;
        let next = b - step;
        if next > lo - 1e-9 * b && next < hi + 1e-9 * b {
            b = next;
        }
    }
    Ok(b)
}

/// Density with mean one and variance `sigma2`.
pub fn calibrate(kind: DistKind, sigma2: f64) -> Result<DistSpec> {
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::InvalidArgument(format!("variance must be positive, got {sigma2}")));
    }
    Ok(match kind {
        DistKind::Gamma => DistSpec::Gamma { shape: 1.0 / sigma2, rate: 1.0 / sigma2 },
        DistKind::LogNormal => {
            let v = sigma2.ln_1p();
            DistSpec::LogNormal { m: -0.5 * v, v }
        }
        DistKind::BetaPrime => {
            let beta = 2.0 + 2.0 / sigma2;
            DistSpec::BetaPrime { alpha: beta - 1.0, beta }
        }
        DistKind::LogLogistic => {
            let shape = loglogistic_shape(sigma2)?;
            let b = PI / shape;
            DistSpec::LogLogistic { scale: b.sin() / b, shape }
        }
    })
}

impl DistSpec {
    pub fn kind(&self) -> DistKind {
        match self {
            DistSpec::Gamma { .. } => DistKind::Gamma,
            DistSpec::LogNormal { .. } => DistKind::LogNormal,
            DistSpec::BetaPrime { .. } => DistKind::BetaPrime,
            DistSpec::LogLogistic { .. } => DistKind::LogLogistic,
        }
    }

    /// Closed-form mean.
    pub fn mean(&self) -> f64 {
        match *self {
            DistSpec::Gamma { shape, rate } => shape / rate,
            DistSpec::LogNormal { m, v } => (m + 0.5 * v).exp(),
            DistSpec::BetaPrime { alpha, beta } => alpha / (beta - 1.0),
            DistSpec::LogLogistic { scale, shape } => {
                let b = PI / shape;
                scale * b / b.sin()
            }
        }
    }

    /// Closed-form variance.
    pub fn variance(&self) -> f64 {
        match *self {
            DistSpec::Gamma { shape, rate } => shape / (rate * rate),
            DistSpec::LogNormal { m, v } => v.exp_m1() * (2.0 * m + v).exp(),
            DistSpec::BetaPrime { alpha, beta } => {
                alpha * (alpha + beta - 1.0) / ((beta - 2.0) * (beta - 1.0).powi(2))
            }
            DistSpec::LogLogistic { scale, shape } => {
                let b = PI / shape;
                scale * scale * (2.0 * b / (2.0 * b).sin() - b * b / (b.sin() * b.sin()))
            }
        }
    }

    /// Density at `x >= 0`. At zero the limit is returned; it is infinite
    /// only for a Gamma with shape below one.
    pub fn pdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        if x == 0.0 {
            return match *self {
                DistSpec::Gamma { shape, rate } if shape == 1.0 => rate,
                DistSpec::Gamma { shape, .. } if shape < 1.0 => f64::INFINITY,
                DistSpec::BetaPrime { alpha, beta } if alpha == 1.0 => (-ln_beta(1.0, beta)).exp(),
                DistSpec::LogLogistic { scale, shape } if shape == 1.0 => 1.0 / scale,
                _ => 0.0,
            };
        }
        self.ln_pdf(x).exp()
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        match *self {
            DistSpec::Gamma { shape, rate } => {
                shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
            }
            DistSpec::LogNormal { m, v } => {
                let lx = x.ln();
                -lx - 0.5 * (2.0 * PI * v).ln() - 0.5 * (lx - m).powi(2) / v
            }
            DistSpec::BetaPrime { alpha, beta } => {
                (alpha - 1.0) * x.ln() - (alpha + beta) * x.ln_1p() - ln_beta(alpha, beta)
            }
            DistSpec::LogLogistic { scale, shape } => {
                let lz = (x / scale).ln();
                (shape / scale).ln() + (shape - 1.0) * lz - 2.0 * (shape * lz).exp().ln_1p()
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        if x.is_infinite() {
            return 1.0;
        }
        match *self {
            DistSpec::Gamma { shape, rate } => gamma_p(shape, rate * x),
            DistSpec::LogNormal { m, v } => normal_cdf((x.ln() - m) / v.sqrt()),
            DistSpec::BetaPrime { alpha, beta } => beta_inc(alpha, beta, x / (1.0 + x)),
            DistSpec::LogLogistic { scale, shape } => 1.0 / (1.0 + (x / scale).powf(-shape)),
        }
    }

    /// Survival function `1 - cdf(x)`, accurate in the upper tail.
    pub fn sf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 1.0;
        }
        if x.is_infinite() {
            return 0.0;
        }
        match *self {
            DistSpec::Gamma { shape, rate } => gamma_q(shape, rate * x),
            DistSpec::LogNormal { m, v } => normal_cdf(-(x.ln() - m) / v.sqrt()),
            DistSpec::BetaPrime { alpha, beta } => beta_inc(beta, alpha, 1.0 / (1.0 + x)),
            DistSpec::LogLogistic { scale, shape } => 1.0 / (1.0 + (x / scale).powf(shape)),
        }
    }

    /// Inverse CDF for `p` in (0, 1).
    pub fn quantile(&self, p: f64) -> f64 {
        if p <= 0.0 {
            return 0.0;
        }
        if p >= 1.0 {
            return f64::INFINITY;
        }
        match *self {
            DistSpec::LogNormal { m, v } => (m + v.sqrt() * normal_quantile(p)).exp(),
            DistSpec::LogLogistic { scale, shape } => scale * (p / (1.0 - p)).powf(1.0 / shape),
            _ => self.numeric_quantile(p),
        }
    }

    // Safeguarded Newton on y = ln x, started from a log-normal matching the
    // first two moments.
    fn numeric_quantile(&self, p: f64) -> f64 {
        let (mean, var) = (self.mean(), self.variance());
        let v = (var / (mean * mean)).ln_1p();
        let m = mean.ln() - 0.5 * v;
        let mut y = m + v.sqrt() * normal_quantile(p);
        let f = |y: f64| self.cdf(y.exp()) - p;
        let (mut lo, mut hi) = (y - 1.0, y + 1.0);
        while f(lo) > 0.0 {
            lo -= 2.0 * (hi - lo);
            if lo < -745.0 {
                break;
            }
        }
        while f(hi) < 0.0 {
            hi += 2.0 * (hi - lo);
            if hi > 709.0 {
                break;
            }
        }
        if !(lo..=hi).contains(&y) {
            y = 0.5 * (lo + hi);
        }
        for _ in 0..200 {
            let fy = f(y);
            if fy == 0.0 {
                break;
            }
            if fy < 0.0 {
                lo = y;
            } else {
                hi = y;
            }
            let x = y.exp();
            let dens = self.pdf(x) * x;
            let mut next = if dens > 0.0 { y - fy / dens } else { f64::NAN };
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            let done = (next - y).abs() < 1e-15 * (1.0 + y.abs());
            y = next;
            if done || hi - lo < 1e-15 * (1.0 + y.abs()) {
                break;
            }
        }
        y.exp()
    }

    /// One draw. Gamma uses the Marsaglia–Tsang rejection sampler, log-normal
    /// transforms a normal draw, the other two invert the CDF.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            DistSpec::Gamma { shape, rate } => {
                GammaSampler::new(shape, 1.0 / rate).expect("valid gamma parameters").sample(rng)
            }
            DistSpec::LogNormal { m, v } => {
                let z: f64 = StandardNormal.sample(rng);
                (m + v.sqrt() * z).exp()
            }
            _ => {
                let u: f64 = rng.gen_range(f64::EPSILON..1.0);
                self.quantile(u)
            }
        }
    }
}

/// Outcome of a goodness-of-fit test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofResult {
    pub statistic: f64,
    pub pvalue: f64,
    pub dist: DistSpec,
    pub n_used: usize,
    /// zero residuals dropped before testing
    pub n_excluded: usize,
    pub caveat: String,
}

pub const GOF_MIN_OBS: usize = 20;
const SIMPLE_NULL_CAVEAT: &str =
    "asymptotic simple-null p-value; the variance used for calibration is treated as known";

// Sorted positive residuals with the number of zeros removed.
fn prepare(residuals: &[f64]) -> Result<(Vec<f64>, usize)> {
    let mut xs: Vec<f64> = residuals.iter().copied().filter(|&x| x > 0.0).collect();
    let excluded = residuals.len() - xs.len();
    if xs.len() < GOF_MIN_OBS {
        return Err(Error::TooFewObservations { got: xs.len(), min: GOF_MIN_OBS });
    }
    xs.sort_by(|a, b| a.total_cmp(b));
    Ok((xs, excluded))
}

const LN_FLOOR: f64 = -700.0;

/// Anderson–Darling `A^2` against a fully specified density.
pub fn ad_statistic(sorted: &[f64], spec: &DistSpec) -> f64 {
    let n = sorted.len();
    let nf = n as f64;
    let ln_cdf: Vec<f64> = sorted.iter().map(|&x| spec.cdf(x).ln().max(LN_FLOOR)).collect();
    let ln_sf: Vec<f64> = sorted.iter().map(|&x| spec.sf(x).ln().max(LN_FLOOR)).collect();
    let s: f64 = (0..n).map(|i| (2 * i + 1) as f64 * (ln_cdf[i] + ln_sf[n - 1 - i])).sum();
    -nf - s / nf
}

/// Cramér–von Mises `W^2` from sorted probability-integral transforms.
pub fn cvm_statistic_from_uniforms(sorted_u: &[f64]) -> f64 {
    let n = sorted_u.len() as f64;
    let s: f64 = sorted_u
        .iter()
        .enumerate()
        .map(|(i, &u)| (u - (2 * i + 1) as f64 / (2.0 * n)).powi(2))
        .sum();
    s + 1.0 / (12.0 * n)
}

/// Limiting CDF of `A^2` under a simple null (Marsaglia & Marsaglia, 2004).
pub fn ad_limit_cdf(z: f64) -> f64 {
    if z <= 0.0 {
        return 0.0;
    }
    if z < 2.0 {
        (-1.233_714_1 / z).exp() / z.sqrt()
            * (2.000_12
                + (0.247_105 - (0.064_982_1 - (0.034_796_2 - (0.011_672 - 0.001_686_91 * z) * z) * z) * z) * z)
    } else {
        (-(1.0776 - (2.30695 - (0.43424 - (0.082433 - (0.008056 - 0.000_314_6 * z) * z) * z) * z) * z).exp())
            .exp()
    }
    .clamp(0.0, 1.0)
}

/// Limiting CDF of `W^2`: the Anderson–Darling (1952) series in `K_{1/4}`.
pub fn cvm_limit_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let mut sum = 0.0;
    let mut coef = 1.0; // Gamma(j+1/2) / (Gamma(1/2) j!)
    for j in 0..200 {
        if j > 0 {
            coef *= (2 * j - 1) as f64 / (2 * j) as f64;
        }
        let q = (4 * j + 1) as f64;
        let z = q * q / (16.0 * x);
        if z > 700.0 {
            break;
        }
        sum += coef * q.sqrt() * (-z).exp() * bessel_k(0.25, z);
    }
    (sum / (PI * x.sqrt())).clamp(0.0, 1.0)
}

pub fn ad_test(residuals: &[f64], spec: &DistSpec) -> Result<GofResult> {
    let (xs, excluded) = prepare(residuals)?;
    let stat = ad_statistic(&xs, spec);
    Ok(GofResult {
        statistic: stat,
        pvalue: 1.0 - ad_limit_cdf(stat),
        dist: *spec,
        n_used: xs.len(),
        n_excluded: excluded,
        caveat: SIMPLE_NULL_CAVEAT.into(),
    })
}

pub fn cvm_test(residuals: &[f64], spec: &DistSpec) -> Result<GofResult> {
    let (xs, excluded) = prepare(residuals)?;
    let u: Vec<f64> = xs.iter().map(|&x| spec.cdf(x)).collect();
    let stat = cvm_statistic_from_uniforms(&u);
    Ok(GofResult {
        statistic: stat,
        pvalue: 1.0 - cvm_limit_cdf(stat),
        dist: *spec,
        n_used: xs.len(),
        n_excluded: excluded,
        caveat: SIMPLE_NULL_CAVEAT.into(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GofTest {
    AD,
    CvM,
}

/// One row of a goodness-of-fit table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofRow {
    pub series: String,
    pub test: GofTest,
    pub kind: DistKind,
    pub result: GofResult,
}

/// Both tests against all four densities calibrated on `sigma2`, in the
/// order AD(Gamma, Log-N, Beta', Log-L), CvM(...).
pub fn gof_table(series: &str, residuals: &[f64], sigma2: f64) -> Result<Vec<GofRow>> {
    let mut rows = Vec::with_capacity(8);
    for test in [GofTest::AD, GofTest::CvM] {
        for kind in DistKind::ALL {
            let spec = calibrate(kind, sigma2)?;
            let result = match test {
                GofTest::AD => ad_test(residuals, &spec)?,
                GofTest::CvM => cvm_test(residuals, &spec)?,
            };
            rows.push(GofRow { series: series.into(), test, kind, result });
        }
    }
    Ok(rows)
}
