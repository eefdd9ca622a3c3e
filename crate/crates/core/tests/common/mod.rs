#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use pathmed::data_io::Dataset;
use pathmed::rng::Stream;

/// X ~ N(0,1), M = a X + e2, Y = c X + b M + e1.
pub fn mediation_data(n: usize, a: f64, b: f64, c: f64, seed: u64) -> Dataset {
    let mut s = Stream::new(seed, 0);
    let mut x = Vec::with_capacity(n);
    let mut m = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let xi = s.std_normal();
        let mi = a * xi + s.std_normal();
        let yi = c * xi + b * mi + s.std_normal();
        x.push(xi);
        m.push(mi);
        y.push(yi);
    }
    Dataset::from_columns(vec![("X".into(), x), ("M".into(), m), ("Y".into(), y)]).unwrap()
}

/// Coefficients (intercept first) and standard errors from the normal
/// equations with an explicit inverse of X'X.
pub fn normal_equations(y: &DVector<f64>, x: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
    let n = x.nrows();
    let k = x.ncols() + 1;
    let design = DMatrix::from_fn(n, k, |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] });
    let xtx = design.transpose() * &design;
    let inv = xtx.try_inverse().expect("full rank");
    let beta = &inv * design.transpose() * y;
    let resid = y - &design * &beta;
    let s2 = resid.norm_squared() / (n - k) as f64;
    let se = (0..k).map(|j| (s2 * inv[(j, j)]).sqrt()).collect();
    (beta.iter().cloned().collect(), se)
}

/// Composite Simpson rule with `n` (even) intervals.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

pub fn phi(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

pub fn big_phi(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// P(X·Y <= c) for independent X ~ N(m1, s1²), Y ~ N(m2, s2²), by
/// integrating over X.
pub fn product_cdf(c: f64, m1: f64, s1: f64, m2: f64, s2: f64) -> f64 {
    let f = |z: f64| {
        let x = m1 + s1 * z;
        if x == 0.0 {
            return phi(z) * if c >= 0.0 { 1.0 } else { 0.0 };
        }
        let u = big_phi((c / x - m2) / s2);
        phi(z) * if x > 0.0 { u } else { 1.0 - u }
    };
    // Split at the sign change of X so the integrand is smooth on each piece.
    let z0 = (-m1 / s1).clamp(-12.0, 12.0);
    simpson(f, -12.0, z0, 20_000) + simpson(f, z0, 12.0, 20_000)
}

/// Quantile of [`product_cdf`] by bisection.
pub fn product_quantile(p: f64, m1: f64, s1: f64, m2: f64, s2: f64) -> f64 {
    let scale = (m1.abs() + 8.0 * s1) * (m2.abs() + 8.0 * s2);
    let (mut lo, mut hi) = (-scale, scale);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if product_cdf(mid, m1, s1, m2, s2) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
