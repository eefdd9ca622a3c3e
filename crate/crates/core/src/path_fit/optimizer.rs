//! BFGS with Armijo backtracking over an objective that may be undefined
//! (returns `None`) outside its feasible region.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct BfgsOptions {
    pub max_iter: usize,
    pub grad_tol: f64,
    pub rel_f_tol: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self { max_iter: 500, grad_tol: 1e-8, rel_f_tol: 1e-12 }
    }
}

#[derive(Debug, Clone)]
pub struct BfgsResult {
    pub x: DVector<f64>,
    pub f: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Central finite-difference gradient. Steps that leave the feasible region
/// fall back to a one-sided difference.
pub fn numeric_gradient<F>(f: &F, x: &DVector<f64>) -> Option<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> Option<f64>,
{
    let f0 = f(x)?;
    let mut g = DVector::zeros(x.len());
    let mut xp = x.clone();
    for i in 0..x.len() {
        let h = 1e-6 * x[i].abs().max(1.0);
        xp[i] = x[i] + h;
        let up = f(&xp);
        xp[i] = x[i] - h;
        let down = f(&xp);
        xp[i] = x[i];
        g[i] = match (up, down) {
            (Some(u), Some(d)) => (u - d) / (2.0 * h),
            (Some(u), None) => (u - f0) / h,
            (None, Some(d)) => (f0 - d) / h,
            (None, None) => return None,
        };
    }
    Some(g)
}

pub fn minimize<F, G>(f: F, grad: G, x0: DVector<f64>, opts: &BfgsOptions) -> Option<BfgsResult>
where
    F: Fn(&DVector<f64>) -> Option<f64>,
    G: Fn(&DVector<f64>) -> Option<DVector<f64>>,
{
    let gradient = |x: &DVector<f64>| -> Option<DVector<f64>> {
        match grad(x) {
            Some(g) if g.iter().all(|v| v.is_finite()) => Some(g),
            _ => numeric_gradient(&f, x),
        }
    };

    let k = x0.len();
    let mut x = x0;
    let mut fx = f(&x)?;
    let mut g = gradient(&x)?;
    let mut h_inv = DMatrix::<f64>::identity(k, k);
    let mut first_step = true;

    for iter in 0..opts.max_iter {
        let gnorm = g.amax();
        if gnorm < opts.grad_tol {
            return Some(BfgsResult { x, f: fx, grad_norm: gnorm, iterations: iter, converged: true });
        }
        let mut d = -(&h_inv * &g);
        let mut slope = g.dot(&d);
        if !(slope < 0.0) {
            h_inv = DMatrix::identity(k, k);
            d = -g.clone();
            slope = g.dot(&d);
        }

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial = &x + t * &d;
            if let Some(ft) = f(&trial) {
                if ft.is_finite() && ft <= fx + 1e-4 * t * slope {
                    accepted = Some((trial, ft));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            // No descent possible at machine precision.
            return Some(BfgsResult { x, f: fx, grad_norm: gnorm, iterations: iter, converged: false });
        };
        let g_new = gradient(&x_new)?;
        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-16 * s.norm() * y.norm() {
            if first_step {
                h_inv *= sy / y.dot(&y);
                first_step = false;
            }
            let rho = 1.0 / sy;
            let hy = &h_inv * &y;
            let yhy = y.dot(&hy);
            h_inv += ((1.0 + rho * yhy) * rho) * (&s * s.transpose())
                - rho * (&hy * s.transpose() + &s * hy.transpose());
        }
        let df = (fx - f_new).abs();
        x = x_new;
        g = g_new;
        let prev = fx;
        fx = f_new;
        if df <= opts.rel_f_tol * prev.abs().max(fx.abs()) {
            let gnorm = g.amax();
            return Some(BfgsResult { x, f: fx, grad_norm: gnorm, iterations: iter + 1, converged: true });
        }
    }
    let gnorm = g.amax();
    Some(BfgsResult { x, f: fx, grad_norm: gnorm, iterations: opts.max_iter, converged: gnorm < opts.grad_tol })
}
