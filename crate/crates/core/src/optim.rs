//! BFGS minimization with a backtracking line search that also halves the
//! step whenever the trial point is inadmissible.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Stop when the gradient max-norm falls below this value.
    pub grad_tol: f64,
    pub max_halvings: usize,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        BfgsOptions { max_iter: 500, grad_tol: 1e-7, max_halvings: 60 }
    }
}

#[derive(Debug, Clone)]
pub struct BfgsOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn max_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

/// Minimize `f`, which returns `None` at inadmissible points and otherwise
/// the value and gradient. `h0` is the initial inverse-Hessian approximation.
/// Returns `None` only if the starting point is inadmissible.
pub fn bfgs_minimize<F>(mut f: F, x0: &[f64], h0: DMatrix<f64>, opts: BfgsOptions) -> Option<BfgsOutcome>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let n = x0.len();
    let mut x = DVector::from_column_slice(x0);
    let (mut fx, g) = f(x.as_slice())?;
    let mut g = DVector::from_vec(g);
    let mut h = h0.clone();
    let mut reset = false;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        if max_norm(&g) < opts.grad_tol {
            break;
        }
        iterations += 1;
        let mut dir = -(&h * &g);
        if dir.dot(&g) >= 0.0 {
            // not a descent direction: fall back to the initial metric
            h = h0.clone();
            dir = -(&h * &g);
        }
        let slope = dir.dot(&g);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..opts.max_halvings {
            let trial = &x + &dir * step;
            if let Some((ft, gt)) = f(trial.as_slice()) {
                if ft.is_finite() && ft <= fx + 1e-4 * step * slope {
                    accepted = Some((trial, ft, DVector::from_vec(gt)));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((xn, fxn, gn)) = accepted else {
            if reset {
                break;
            }
            reset = true;
            h = h0.clone();
            continue;
        };
        reset = false;
        let s = &xn - &x;
        let y = &gn - &g;
        let sy = s.dot(&y);
        if sy > 1e-300 {
            let rho = 1.0 / sy;
            let eye = DMatrix::<f64>::identity(n, n);
            let left = &eye - (&s * y.transpose()) * rho;
            let right = &eye - (&y * s.transpose()) * rho;
            h = &left * &h * &right + (&s * s.transpose()) * rho;
        }
        x = xn;
        fx = fxn;
        g = gn;
    }
    let converged = max_norm(&g) < opts.grad_tol;
    Some(BfgsOutcome { x: x.as_slice().to_vec(), value: fx, gradient: g.as_slice().to_vec(), iterations, converged })
}
