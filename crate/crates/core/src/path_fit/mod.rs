//! Maximum-likelihood estimation of recursive path models.
//!
//! The model is held in two `p × p` matrices: `A` with `A[i][j]` the path
//! coefficient from variable `j` to variable `i`, and `P` holding exogenous
//! variances and covariances plus disturbance variances (each disturbance
//! enters its outcome with a loading fixed at 1). The implied covariance is
//! `Σ = (I − A)⁻¹ P (I − A)⁻ᵀ` and the discrepancy minimized is
//!
//! ```text
//! F(θ) = ln|Σ(θ)| + tr(S Σ(θ)⁻¹) − ln|S| − p
//! ```
//!
//! with `χ² = (n − 1)·F_min`.

mod indices;
pub mod optimizer;

pub use indices::{compute_indices, index_verdicts, FitIndices, IndexVerdict, Verdict};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::Serialize;
use thiserror::Error;

use crate::data_io::SampleMoments;
use crate::model_dsl::{validate_against_columns, ModelError, ModelSpec};
use crate::special::chi_square_sf;
use optimizer::{minimize, BfgsOptions};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PathFitError {
    #[error("path matrix contains a directed cycle")]
    Cycle,
    #[error("{0} covariance matrix is not positive definite")]
    NotPositiveDefinite(&'static str),
    #[error("optimizer did not converge after {iterations} iterations (gradient max-norm {grad_norm:.3e})")]
    NonConvergence { iterations: usize, grad_norm: f64 },
    #[error("model is under-identified: {free} free parameters for {moments} moments (df = {df})")]
    UnderIdentified { free: usize, moments: usize, df: i64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Location of one free parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "matrix", rename_all = "snake_case")]
pub enum Slot {
    /// `A[to][from]`.
    Path { to: usize, from: usize },
    /// `P[i][j]`, `i ≤ j`; variance when `i == j`.
    Sym { i: usize, j: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathModelMatrices {
    pub names: Vec<String>,
    pub a: DMatrix<f64>,
    pub p_mat: DMatrix<f64>,
    pub free: Vec<Slot>,
}

impl PathModelMatrices {
    /// Pattern for `spec` with every free value zero.
    pub fn from_spec(spec: &ModelSpec) -> Self {
        let p = spec.variables.len();
        let idx = |n: &str| spec.index_of(n).expect("validated spec");
        let mut free = Vec::new();
        for r in &spec.regressions {
            let to = idx(&r.outcome);
            for pr in &r.predictors {
                free.push(Slot::Path { to, from: idx(pr) });
            }
        }
        for i in 0..p {
            free.push(Slot::Sym { i, j: i });
        }
        for c in &spec.covariances {
            let (a, b) = (idx(&c.left), idx(&c.right));
            free.push(Slot::Sym { i: a.min(b), j: a.max(b) });
        }
        PathModelMatrices {
            names: spec.variables.clone(),
            a: DMatrix::zeros(p, p),
            p_mat: DMatrix::zeros(p, p),
            free,
        }
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn params(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.free.len(),
            self.free.iter().map(|s| match *s {
                Slot::Path { to, from } => self.a[(to, from)],
                Slot::Sym { i, j } => self.p_mat[(i, j)],
            }),
        )
    }

    pub fn set_params(&mut self, theta: &DVector<f64>) {
        for (s, &v) in self.free.iter().zip(theta.iter()) {
            match *s {
                Slot::Path { to, from } => self.a[(to, from)] = v,
                Slot::Sym { i, j } => {
                    self.p_mat[(i, j)] = v;
                    self.p_mat[(j, i)] = v;
                }
            }
        }
    }

    fn is_acyclic(&self) -> bool {
        let p = self.dim();
        let mut edge = vec![vec![false; p]; p];
        for i in 0..p {
            for j in 0..p {
                if self.a[(i, j)] != 0.0 {
                    edge[j][i] = true;
                }
            }
        }
        for s in &self.free {
            if let Slot::Path { to, from } = *s {
                edge[from][to] = true;
            }
        }
        // Kahn's algorithm
        let mut indeg: Vec<usize> = (0..p).map(|i| (0..p).filter(|&j| edge[j][i]).count()).collect();
        let mut queue: Vec<usize> = (0..p).filter(|&i| indeg[i] == 0).collect();
        let mut seen = 0;
        while let Some(v) = queue.pop() {
            seen += 1;
            for w in 0..p {
                if edge[v][w] {
                    indeg[w] -= 1;
                    if indeg[w] == 0 {
                        queue.push(w);
                    }
                }
            }
        }
        seen == p
    }
}

/// `(I − A)⁻¹`; valid only for acyclic `A`.
fn total_effects(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let p = a.nrows();
    (DMatrix::identity(p, p) - a).try_inverse()
}

pub fn implied_covariance(mats: &PathModelMatrices) -> Result<DMatrix<f64>, PathFitError> {
    if !mats.is_acyclic() {
        return Err(PathFitError::Cycle);
    }
    let b = total_effects(&mats.a).ok_or(PathFitError::Cycle)?;
    let sigma = &b * &mats.p_mat * b.transpose();
    Ok(symmetrize(sigma))
}

fn symmetrize(mut m: DMatrix<f64>) -> DMatrix<f64> {
    let p = m.nrows();
    for i in 0..p {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

fn log_det_chol(c: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * c.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// ML discrepancy function for a fixed sample covariance.
pub struct Discrepancy<'a> {
    pattern: PathModelMatrices,
    s: &'a DMatrix<f64>,
    log_det_s: f64,
}

impl<'a> Discrepancy<'a> {
    pub fn new(pattern: PathModelMatrices, s: &'a DMatrix<f64>) -> Result<Self, PathFitError> {
        let chol = Cholesky::new(s.clone()).ok_or(PathFitError::NotPositiveDefinite("sample"))?;
        Ok(Self { pattern, s, log_det_s: log_det_chol(&chol) })
    }

    fn sigma_parts(&self, theta: &DVector<f64>) -> Option<(DMatrix<f64>, DMatrix<f64>, Cholesky<f64, Dyn>)> {
        let mut m = self.pattern.clone();
        m.set_params(theta);
        let b = total_effects(&m.a)?;
        let sigma = symmetrize(&b * &m.p_mat * b.transpose());
        let chol = Cholesky::new(sigma.clone())?;
        Some((b, sigma, chol))
    }

    /// `None` where `Σ(θ)` is not positive definite.
    pub fn value(&self, theta: &DVector<f64>) -> Option<f64> {
        let (_, _, chol) = self.sigma_parts(theta)?;
        let p = self.s.nrows() as f64;
        let trace = chol.solve(self.s).trace();
        let f = log_det_chol(&chol) + trace - self.log_det_s - p;
        f.is_finite().then_some(f)
    }

    pub fn gradient(&self, theta: &DVector<f64>) -> Option<DVector<f64>> {
        let (b, sigma, chol) = self.sigma_parts(theta)?;
        let p = sigma.nrows();
        let sigma_inv = chol.solve(&DMatrix::identity(p, p));
        // W = Σ⁻¹ (Σ − S) Σ⁻¹
        let w = &sigma_inv - &sigma_inv * self.s * &sigma_inv;
        let ga = 2.0 * b.transpose() * &w * &sigma;
        let gp = b.transpose() * &w * &b;
        Some(DVector::from_iterator(
            self.pattern.free.len(),
            self.pattern.free.iter().map(|s| match *s {
                Slot::Path { to, from } => ga[(to, from)],
                Slot::Sym { i, j } if i == j => gp[(i, i)],
                Slot::Sym { i, j } => 2.0 * gp[(i, j)],
            }),
        ))
    }

    pub fn pattern(&self) -> &PathModelMatrices {
        &self.pattern
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitStatistics {
    pub chi_square: f64,
    pub df: usize,
    pub p_value: f64,
    pub f_min: f64,
    pub n: usize,
    pub p: usize,
    pub converged: bool,
    pub iterations: usize,
}

impl FitStatistics {
    fn new(f_min: f64, df: usize, n: usize, p: usize, converged: bool, iterations: usize) -> Self {
        let chi_square = ((n as f64 - 1.0) * f_min).max(0.0);
        // A saturated model has no test; report the trivial p = 1.
        let p_value = if df == 0 { 1.0 } else { chi_square_sf(chi_square, df as f64) };
        FitStatistics { chi_square, df, p_value, f_min, n, p, converged, iterations }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParameterEstimate {
    pub lhs: String,
    /// `~` for a path, `~~` for a (co)variance.
    pub op: &'static str,
    pub rhs: String,
    pub estimate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlFit {
    pub theta: DVector<f64>,
    pub matrices: PathModelMatrices,
    pub implied: DMatrix<f64>,
    /// Sample covariance of the model variables, in model order.
    pub sample: DMatrix<f64>,
    pub stats: FitStatistics,
}

impl MlFit {
    pub fn estimates(&self) -> Vec<ParameterEstimate> {
        let names = &self.matrices.names;
        self.matrices
            .free
            .iter()
            .zip(self.theta.iter())
            .map(|(s, &v)| match *s {
                Slot::Path { to, from } => ParameterEstimate {
                    lhs: names[to].clone(),
                    op: "~",
                    rhs: names[from].clone(),
                    estimate: v,
                },
                Slot::Sym { i, j } => ParameterEstimate {
                    lhs: names[i].clone(),
                    op: "~~",
                    rhs: names[j].clone(),
                    estimate: v,
                },
            })
            .collect()
    }

    pub fn path(&self, outcome: &str, predictor: &str) -> Option<f64> {
        let names = &self.matrices.names;
        let to = names.iter().position(|n| n == outcome)?;
        let from = names.iter().position(|n| n == predictor)?;
        self.matrices.free.iter().position(|s| *s == Slot::Path { to, from }).map(|k| self.theta[k])
    }
}

pub fn moment_count(p: usize) -> usize {
    p * (p + 1) / 2
}

/// Equation-wise least squares from the covariance matrix: regression
/// slopes, residual variances, and sample exogenous (co)variances.
pub fn ols_start(pattern: &PathModelMatrices, s: &DMatrix<f64>) -> DVector<f64> {
    let p = pattern.dim();
    let mut m = pattern.clone();
    let mut resid_var: Vec<Option<f64>> = vec![None; p];
    for to in 0..p {
        let preds: Vec<usize> = pattern
            .free
            .iter()
            .filter_map(|sl| match *sl {
                Slot::Path { to: t, from } if t == to => Some(from),
                _ => None,
            })
            .collect();
        if preds.is_empty() {
            continue;
        }
        let k = preds.len();
        let sxx = DMatrix::from_fn(k, k, |a, b| s[(preds[a], preds[b])]);
        let sxy = DVector::from_fn(k, |a, _| s[(preds[a], to)]);
        let beta = sxx.clone().cholesky().map(|c| c.solve(&sxy)).unwrap_or_else(|| DVector::zeros(k));
        for (a, &from) in preds.iter().enumerate() {
            m.a[(to, from)] = beta[a];
        }
        resid_var[to] = Some((s[(to, to)] - sxy.dot(&beta)).max(1e-8 * s[(to, to)]));
    }
    for sl in &pattern.free {
        if let Slot::Sym { i, j } = *sl {
            let v = if i == j { resid_var[i].unwrap_or(s[(i, i)]) } else { s[(i, j)] };
            m.p_mat[(i, j)] = v;
            m.p_mat[(j, i)] = v;
        }
    }
    m.params()
}

/// Fit `spec` to `moments` by maximum likelihood.
pub fn fit_ml(spec: &ModelSpec, moments: &SampleMoments) -> Result<MlFit, PathFitError> {
    fit_ml_with(spec, moments, None, &BfgsOptions::default())
}

/// As [`fit_ml`] with an explicit starting point and optimizer settings.
pub fn fit_ml_with(
    spec: &ModelSpec,
    moments: &SampleMoments,
    start: Option<&DVector<f64>>,
    opts: &BfgsOptions,
) -> Result<MlFit, PathFitError> {
    validate_against_columns(spec, &moments.columns)?;
    let sub = moments.subset(&spec.variables).expect("columns validated");
    let s = sub.cov;
    let p = s.nrows();
    let pattern = PathModelMatrices::from_spec(spec);
    let free = pattern.free.len();
    let moments_count = moment_count(p);
    let df = moments_count as i64 - free as i64;
    if df < 0 {
        return Err(PathFitError::UnderIdentified { free, moments: moments_count, df });
    }
    let disc = Discrepancy::new(pattern.clone(), &s)?;

    let x0 = match start {
        Some(x) => x.clone(),
        None => ols_start(&pattern, &s),
    };
    if disc.value(&x0).is_none() {
        return Err(PathFitError::NotPositiveDefinite("starting implied"));
    }
    let res = minimize(|t| disc.value(t), |t| disc.gradient(t), x0, opts)
        .ok_or(PathFitError::NotPositiveDefinite("implied"))?;
    if !res.converged {
        return Err(PathFitError::NonConvergence { iterations: res.iterations, grad_norm: res.grad_norm });
    }

    let mut matrices = pattern;
    matrices.set_params(&res.x);
    let implied = implied_covariance(&matrices)?;
    let stats = FitStatistics::new(res.f.max(0.0), df as usize, moments.n, p, res.converged, res.iterations);
    Ok(MlFit { theta: res.x, matrices, implied, sample: s, stats })
}

/// Independence model: all covariances zero, variances free.
pub fn fit_null_model(moments: &SampleMoments) -> Result<FitStatistics, PathFitError> {
    let s = &moments.cov;
    let p = s.nrows();
    let chol = Cholesky::new(s.clone()).ok_or(PathFitError::NotPositiveDefinite("sample"))?;
    let log_det_diag: f64 = s.diagonal().iter().map(|v| v.ln()).sum();
    let f_null = (log_det_diag - log_det_chol(&chol)).max(0.0);
    Ok(FitStatistics::new(f_null, p * (p - 1) / 2, moments.n, p, true, 0))
}

/// Complete path-model analysis: target and null fits, indices and verdicts.
#[derive(Debug, Clone, PartialEq)]
pub struct PathAnalysis {
    pub fit: MlFit,
    pub null: FitStatistics,
    pub indices: FitIndices,
    pub verdicts: Vec<IndexVerdict>,
}

pub fn analyze_path_model(spec: &ModelSpec, moments: &SampleMoments) -> Result<PathAnalysis, PathFitError> {
    let fit = fit_ml(spec, moments)?;
    let sub = moments.subset(&spec.variables).expect("columns validated");
    let null = fit_null_model(&sub)?;
    let indices = compute_indices(&fit.stats, &null, &fit.sample, &fit.implied);
    let verdicts = index_verdicts(&indices, &fit.stats);
    Ok(PathAnalysis { fit, null, indices, verdicts })
}
