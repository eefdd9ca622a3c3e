//! Single-mediator model.
//!
//! Three regressions are fitted:
//!
//! * total:    `Y = i1 + beta1·X + e`
//! * outcome:  `Y = i2 + beta2·X + betaM·M + e`
//! * mediator: `M = i3 + beta3·X + e`
//!
//! The direct effect is `beta2`, the indirect effect `beta3·betaM`
//! (numerically identical to `beta1 − beta2` under OLS) and the total
//! effect `beta1`.

use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

use crate::data_io::Dataset;
use crate::model_dsl::{RoleMap, VariableRole};
use crate::ols::{ols_columns, ols_fit, Coefficient, OlsError, OlsFit};

pub const DEFAULT_ALPHA: f64 = 0.05;
/// Magnitude floor used when comparing effect signs.
pub const DEFAULT_CONSISTENCY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MediationError {
    #[error("{equation}: {source}")]
    Regression {
        equation: &'static str,
        #[source]
        source: OlsError,
    },
    #[error("column `{0}` not found")]
    MissingColumn(String),
    #[error("x, m and y must name distinct columns")]
    NotDistinct,
    #[error("need at least 5 rows, got {0}")]
    TooFewRows(usize),
    #[error("alpha must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
}

impl MediationError {
    pub fn is_rank_deficient(&self) -> bool {
        matches!(self, MediationError::Regression { source: OlsError::RankDeficient { .. }, .. })
    }
}

fn wrap(equation: &'static str) -> impl Fn(OlsError) -> MediationError {
    move |source| match source {
        OlsError::MissingColumn(c) => MediationError::MissingColumn(c),
        source => MediationError::Regression { equation, source },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MediationFit {
    pub x: String,
    pub m: String,
    pub y: String,
    /// Y on X.
    pub eq1: OlsFit,
    /// Y on X and M.
    pub eq2: OlsFit,
    /// M on X.
    pub eq3: OlsFit,
    pub beta1: Coefficient,
    pub beta2: Coefficient,
    pub beta_m: Coefficient,
    pub beta3: Coefficient,
    pub n: usize,
}

fn check_inputs(data: &Dataset, x: &str, m: &str, y: &str) -> Result<(), MediationError> {
    if x == m || x == y || m == y {
        return Err(MediationError::NotDistinct);
    }
    for c in [x, m, y] {
        data.column_index(c).map_err(|_| MediationError::MissingColumn(c.to_string()))?;
    }
    if data.n() < 5 {
        return Err(MediationError::TooFewRows(data.n()));
    }
    Ok(())
}

pub fn fit_mediation(data: &Dataset, x: &str, m: &str, y: &str) -> Result<MediationFit, MediationError> {
    check_inputs(data, x, m, y)?;
    let eq1 = ols_columns(data, y, &[x]).map_err(wrap("equation Y ~ X"))?;
    let eq2 = ols_columns(data, y, &[x, m]).map_err(wrap("equation Y ~ X + M"))?;
    let eq3 = ols_columns(data, m, &[x]).map_err(wrap("equation M ~ X"))?;
    let beta1 = eq1.coefficient(x).expect("x in eq1");
    let beta2 = eq2.coefficient(x).expect("x in eq2");
    let beta_m = eq2.coefficient(m).expect("m in eq2");
    let beta3 = eq3.coefficient(x).expect("x in eq3");
    Ok(MediationFit {
        x: x.into(),
        m: m.into(),
        y: y.into(),
        eq1,
        eq2,
        eq3,
        beta1,
        beta2,
        beta_m,
        beta3,
        n: data.n(),
    })
}

/// The two regressions the indirect effect needs, without the total-effect
/// equation. Returns `(beta3, se3, betaM, seM)`.
pub fn fit_indirect_paths(data: &Dataset, x: &str, m: &str, y: &str) -> Result<[f64; 4], MediationError> {
    let eq2 = ols_columns(data, y, &[x, m]).map_err(wrap("equation Y ~ X + M"))?;
    let eq3 = ols_columns(data, m, &[x]).map_err(wrap("equation M ~ X"))?;
    let bm = eq2.coefficient(m).expect("m in eq2");
    let b3 = eq3.coefficient(x).expect("x in eq3");
    Ok([b3.estimate, b3.se, bm.estimate, bm.se])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EffectDecomposition {
    pub direct: f64,
    pub indirect_product: f64,
    pub indirect_difference: f64,
    pub total_eq1: f64,
    pub total_composed: f64,
}

impl EffectDecomposition {
    pub fn from_coefficients(beta1: f64, beta2: f64, beta3: f64, beta_m: f64) -> Self {
        let indirect_product = beta3 * beta_m;
        EffectDecomposition {
            direct: beta2,
            indirect_product,
            indirect_difference: beta1 - beta2,
            total_eq1: beta1,
            total_composed: beta2 + indirect_product,
        }
    }

    /// Discrepancy between the two indirect-effect routes, relative to the
    /// magnitude of the terms involved.
    pub fn identity_error(&self) -> f64 {
        let scale = self.total_eq1.abs().max(self.direct.abs()).max(self.indirect_product.abs());
        if scale == 0.0 {
            0.0
        } else {
            (self.indirect_difference - self.indirect_product).abs() / scale
        }
    }
}

pub fn decompose_effects(fit: &MediationFit) -> EffectDecomposition {
    EffectDecomposition::from_coefficients(
        fit.beta1.estimate,
        fit.beta2.estimate,
        fit.beta3.estimate,
        fit.beta_m.estimate,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Consistency {
    Consistent,
    Inconsistent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MediationOutcome {
    /// `failed_step` is 1-based.
    NoMediation { failed_step: usize },
    CompleteMediation,
    PartialMediation,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CausalStepsVerdict {
    pub step_results: [bool; 4],
    pub alpha: f64,
    pub outcome: MediationOutcome,
    pub consistency: Consistency,
    pub note: String,
}

/// Baron–Kenny causal steps.
///
/// 1. `beta1` significant, 2. `beta3` significant, 3. `betaM` significant,
/// 4. `|beta1| > |beta2|`. Complete mediation needs steps 1–3 with a
/// nonsignificant `beta2`; partial mediation needs all four with a
/// significant `beta2`.
pub fn causal_steps(fit: &MediationFit, alpha: f64) -> Result<CausalStepsVerdict, MediationError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(MediationError::InvalidAlpha(alpha));
    }
    let sig = |c: &Coefficient| c.p < alpha;
    let steps = [
        sig(&fit.beta1),
        sig(&fit.beta3),
        sig(&fit.beta_m),
        fit.beta1.estimate.abs() > fit.beta2.estimate.abs(),
    ];
    let direct_significant = sig(&fit.beta2);
    let consistency = classify_consistency(&decompose_effects(fit), DEFAULT_CONSISTENCY_TOL);

    let mut notes = Vec::new();
    let outcome = if let Some(i) = steps[..3].iter().position(|s| !s) {
        if i == 0 {
            notes.push(
                "X-Y relation is not significant; mediation may still exist when direct and \
                 indirect effects have opposite signs (inconsistent mediation / suppression)"
                    .to_string(),
            );
        }
        MediationOutcome::NoMediation { failed_step: i + 1 }
    } else if !direct_significant {
        MediationOutcome::CompleteMediation
    } else if steps[3] {
        MediationOutcome::PartialMediation
    } else {
        notes.push("direct effect does not shrink when the mediator is added".to_string());
        MediationOutcome::NoMediation { failed_step: 4 }
    };
    if consistency == Consistency::Inconsistent {
        notes.push("direct and indirect effects have opposite signs".to_string());
    }
    Ok(CausalStepsVerdict { step_results: steps, alpha, outcome, consistency, note: notes.join("; ") })
}

pub fn classify_consistency(dec: &EffectDecomposition, tol: f64) -> Consistency {
    let a = dec.indirect_product;
    let d = dec.direct;
    if a.abs() > tol && d.abs() > tol && a.signum() != d.signum() {
        Consistency::Inconsistent
    } else {
        Consistency::Consistent
    }
}

pub const UNTESTABLE_ASSUMPTIONS: [&str; 4] = [
    "no unmeasured confounding of the X-M, M-Y and X-Y relations",
    "correct causal order X -> M -> Y",
    "no measurement error in X, M or Y",
    "independence of the residuals of the Y ~ X + M and M ~ X equations cannot be verified from data",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InteractionTest {
    pub estimate: f64,
    pub se: f64,
    pub t: f64,
    pub p: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    /// `X·M` product term added to `Y ~ X + M`.
    pub xm_interaction: InteractionTest,
    /// Correlation of the residuals of `Y ~ X + M` and `M ~ X`. Descriptive
    /// only; with OLS residuals it is zero up to rounding.
    pub residual_correlation: f64,
    pub alpha: f64,
    pub untestable: Vec<String>,
}

pub fn check_assumptions(fit: &MediationFit, data: &Dataset, alpha: f64) -> Result<AssumptionReport, MediationError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(MediationError::InvalidAlpha(alpha));
    }
    let xv = data.column(&fit.x).map_err(|_| MediationError::MissingColumn(fit.x.clone()))?;
    let mv = data.column(&fit.m).map_err(|_| MediationError::MissingColumn(fit.m.clone()))?;
    let yv = data.column(&fit.y).map_err(|_| MediationError::MissingColumn(fit.y.clone()))?;
    let n = data.n();
    let design = DMatrix::from_fn(n, 3, |i, j| match j {
        0 => xv[i],
        1 => mv[i],
        _ => xv[i] * mv[i],
    });
    let xm = format!("{}:{}", fit.x, fit.m);
    let names = vec![fit.x.clone(), fit.m.clone(), xm.clone()];
    let aug = ols_fit(&yv, &design, &names).map_err(wrap("equation Y ~ X + M + X:M"))?;
    let c = aug.coefficient(&xm).expect("interaction column");

    Ok(AssumptionReport {
        xm_interaction: InteractionTest { estimate: c.estimate, se: c.se, t: c.t, p: c.p, significant: c.p < alpha },
        residual_correlation: correlation(&fit.eq2.residuals, &fit.eq3.residuals),
        alpha,
        untestable: UNTESTABLE_ASSUMPTIONS.iter().map(|s| s.to_string()).collect(),
    })
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

/// Sample-size warnings for mediation models.
pub fn sample_size_advisory(roles: &RoleMap, n: usize) -> Vec<String> {
    let mediators = roles.count(VariableRole::Mediator);
    let mut out = Vec::new();
    if mediators == 1 && n < 50 {
        out.push(format!(
            "n = {n}: single-mediator standard errors are biased below n = 50"
        ));
    }
    if mediators >= 2 && n < 100 {
        out.push(format!(
            "n = {n} with {mediators} mediators: standard errors need n of at least 100 (up to 200 recommended)"
        ));
    } else if mediators >= 2 && n < 200 {
        out.push(format!(
            "n = {n} with {mediators} mediators: 200 is the upper end of the recommended 100-200 range"
        ));
    }
    out
}
