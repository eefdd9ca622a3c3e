//! Ordinary least squares with an intercept, solved through a Householder QR
//! factorization of the augmented design.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::data_io::{DataError, Dataset};
use crate::special::student_t_two_sided_p;

/// Smallest allowed `|R_ii| / max |R_jj|`.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OlsError {
    #[error("design matrix is numerically rank deficient (min/max |R diagonal| = {ratio:.3e}, column `{column}`)")]
    RankDeficient { ratio: f64, column: String },
    #[error("need at least {needed} rows for {predictors} predictors, got {rows}")]
    TooFewRows { rows: usize, predictors: usize, needed: usize },
    #[error("{0}")]
    Shape(String),
    #[error("column `{0}` not found")]
    MissingColumn(String),
}

impl From<DataError> for OlsError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::MissingColumn(c) => OlsError::MissingColumn(c),
            other => OlsError::Shape(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OlsFit {
    pub predictors: Vec<String>,
    pub intercept: f64,
    pub slopes: Vec<f64>,
    /// Standard errors, intercept first.
    pub se: Vec<f64>,
    pub t_stats: Vec<f64>,
    pub p_values: Vec<f64>,
    #[serde(skip)]
    pub residuals: Vec<f64>,
    /// Residual variance, divisor `n − k − 1`.
    pub sigma2: f64,
    pub r2: f64,
    pub df_resid: usize,
    pub n: usize,
}

/// One coefficient with its inference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Coefficient {
    pub estimate: f64,
    pub se: f64,
    pub t: f64,
    pub p: f64,
}

impl OlsFit {
    pub fn coefficient(&self, name: &str) -> Option<Coefficient> {
        let j = self.predictors.iter().position(|p| p == name)? + 1;
        Some(Coefficient {
            estimate: self.slopes[j - 1],
            se: self.se[j],
            t: self.t_stats[j],
            p: self.p_values[j],
        })
    }

    pub fn intercept_coefficient(&self) -> Coefficient {
        Coefficient { estimate: self.intercept, se: self.se[0], t: self.t_stats[0], p: self.p_values[0] }
    }

    pub fn rss(&self) -> f64 {
        self.residuals.iter().map(|r| r * r).sum()
    }
}

fn t_stat(estimate: f64, se: f64) -> f64 {
    if se > 0.0 {
        estimate / se
    } else if estimate == 0.0 {
        0.0
    } else {
        estimate.signum() * f64::INFINITY
    }
}

/// Regress `y` on the columns of `x` plus an intercept.
pub fn ols_fit(y: &DVector<f64>, x: &DMatrix<f64>, names: &[String]) -> Result<OlsFit, OlsError> {
    let n = y.len();
    let k = x.ncols();
    if x.nrows() != n {
        return Err(OlsError::Shape(format!("y has {n} rows, X has {}", x.nrows())));
    }
    if names.len() != k {
        return Err(OlsError::Shape(format!("{} names for {k} predictors", names.len())));
    }
    if n < k + 2 {
        return Err(OlsError::TooFewRows { rows: n, predictors: k, needed: k + 2 });
    }

    let mut design = DMatrix::from_element(n, k + 1, 1.0);
    design.columns_mut(1, k).copy_from(x);

    let qr = design.clone().qr();
    let r = qr.r();
    let diag: Vec<f64> = (0..=k).map(|i| r[(i, i)].abs()).collect();
    let max = diag.iter().cloned().fold(0.0, f64::max);
    let (min_idx, min) = diag
        .iter()
        .cloned()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, d)| if d < acc.1 { (i, d) } else { acc });
    if !(max > 0.0) || !(min >= RANK_TOLERANCE * max) {
        let column = if min_idx == 0 { "(intercept)".to_string() } else { names[min_idx - 1].clone() };
        return Err(OlsError::RankDeficient { ratio: if max > 0.0 { min / max } else { 0.0 }, column });
    }

    let qty = qr.q().tr_mul(y);
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| OlsError::RankDeficient { ratio: 0.0, column: "(solve)".into() })?;

    let fitted = &design * &beta;
    let residuals: Vec<f64> = (0..n).map(|i| y[i] - fitted[i]).collect();
    let rss: f64 = residuals.iter().map(|e| e * e).sum();
    let df_resid = n - k - 1;
    let sigma2 = rss / df_resid as f64;

    // (X'X)^{-1} = R^{-1} R^{-T}
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k + 1, k + 1))
        .ok_or_else(|| OlsError::RankDeficient { ratio: 0.0, column: "(inverse)".into() })?;
    let se: Vec<f64> = (0..=k)
        .map(|i| (sigma2 * r_inv.row(i).norm_squared()).sqrt())
        .collect();
    let t_stats: Vec<f64> = (0..=k).map(|i| t_stat(beta[i], se[i])).collect();
    let p_values: Vec<f64> = t_stats.iter().map(|&t| student_t_two_sided_p(t, df_resid as f64)).collect();

    let y_mean = y.mean();
    let tss: f64 = y.iter().map(|v| (v - y_mean).powi(2)).sum();
    let r2 = if tss > 0.0 { (1.0 - rss / tss).clamp(0.0, 1.0) } else { 1.0 };

    Ok(OlsFit {
        predictors: names.to_vec(),
        intercept: beta[0],
        slopes: beta.iter().skip(1).cloned().collect(),
        se,
        t_stats,
        p_values,
        residuals,
        sigma2,
        r2,
        df_resid,
        n,
    })
}

/// Regress a dataset column on other columns by name.
pub fn ols_columns(data: &Dataset, outcome: &str, predictors: &[&str]) -> Result<OlsFit, OlsError> {
    let y = data.column(outcome)?;
    let idx: Vec<usize> = predictors
        .iter()
        .map(|p| data.column_index(p))
        .collect::<Result<_, _>>()?;
    let x = data.values.select_columns(idx.iter());
    let names: Vec<String> = predictors.iter().map(|s| s.to_string()).collect();
    ols_fit(&y, &x, &names)
}
