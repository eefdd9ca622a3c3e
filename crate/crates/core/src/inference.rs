//! Standard error and confidence limits for the indirect effect.
//!
//! Three interval constructions are provided: normal theory around the
//! delta-method standard error, the percentile bootstrap, and Monte Carlo
//! quantiles of the product of two normal coefficient distributions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data_io::Dataset;
use crate::mediation::{fit_indirect_paths, MediationError, MediationFit};
use crate::rng::Stream;
use crate::special::{normal_quantile, normal_two_sided_p};

pub const DEFAULT_LEVEL: f64 = 0.95;
pub const DEFAULT_BOOT_REPS: usize = 2000;
pub const DEFAULT_DRAWS: usize = 100_000;
pub const MIN_BOOT_REPS: usize = 100;
pub const MIN_DRAWS: usize = 10_000;

/// Draws per independently seeded block of product samples.
const DRAW_BLOCK: usize = 16_384;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InferenceError {
    #[error("confidence level must lie in (0, 1), got {0}")]
    InvalidLevel(f64),
    #[error("standard error must be finite and non-negative, got {0}")]
    InvalidSe(f64),
    #[error("standard error of the indirect effect is zero")]
    ZeroSe,
    #[error("bootstrap needs at least {MIN_BOOT_REPS} replicates, got {0}")]
    TooFewReplicates(usize),
    #[error("product distribution needs at least {MIN_DRAWS} draws, got {0}")]
    TooFewDraws(usize),
    #[error("all {0} bootstrap resamples were degenerate")]
    AllResamplesDegenerate(usize),
    #[error(transparent)]
    Mediation(#[from] MediationError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CiMethod {
    #[serde(alias = "normal")]
    Normal,
    #[serde(alias = "bootstrap")]
    Bootstrap,
    #[serde(alias = "product", alias = "product_distribution")]
    ProductDistribution,
}

impl CiMethod {
    pub const ALL: [CiMethod; 3] = [CiMethod::Normal, CiMethod::Bootstrap, CiMethod::ProductDistribution];

    pub fn name(self) -> &'static str {
        match self {
            CiMethod::Normal => "Normal",
            CiMethod::Bootstrap => "Bootstrap",
            CiMethod::ProductDistribution => "ProductDistribution",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct IntervalMeta {
    /// Bootstrap replicates or product draws requested.
    pub draws: Option<usize>,
    pub seed: Option<u64>,
    /// Degenerate bootstrap resamples that were skipped.
    pub skipped: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntervalEstimate {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub method: CiMethod,
    pub se: Option<f64>,
    pub meta: IntervalMeta,
}

impl IntervalEstimate {
    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

fn check_level(level: f64) -> Result<(), InferenceError> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(InferenceError::InvalidLevel(level))
    }
}

/// Which standard-error formula to use for `beta3·betaM`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SeForm {
    /// First-order multivariate delta method (Sobel).
    #[default]
    Delta,
    /// Exact variance of a product of independent normals; adds `s3²·sM²`.
    Exact,
}

pub fn product_se(beta3: f64, se3: f64, beta_m: f64, se_m: f64, form: SeForm) -> f64 {
    let first_order = beta_m * beta_m * se3 * se3 + beta3 * beta3 * se_m * se_m;
    match form {
        SeForm::Delta => first_order.sqrt(),
        SeForm::Exact => (first_order + se3 * se3 * se_m * se_m).sqrt(),
    }
}

pub fn sobel_se(fit: &MediationFit) -> f64 {
    product_se(fit.beta3.estimate, fit.beta3.se, fit.beta_m.estimate, fit.beta_m.se, SeForm::Delta)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SobelTest {
    pub estimate: f64,
    pub se: f64,
    pub z: f64,
    pub p: f64,
}

pub fn sobel_test_from(estimate: f64, se: f64) -> Result<SobelTest, InferenceError> {
    if !(se > 0.0) {
        return Err(InferenceError::ZeroSe);
    }
    let z = estimate / se;
    Ok(SobelTest { estimate, se, z, p: normal_two_sided_p(z) })
}

pub fn sobel_test(fit: &MediationFit) -> Result<SobelTest, InferenceError> {
    sobel_test_from(fit.beta3.estimate * fit.beta_m.estimate, sobel_se(fit))
}

/// `z_{1 − w/2}` for `level = 1 − w`.
pub fn critical_z(level: f64) -> Result<f64, InferenceError> {
    check_level(level)?;
    Ok(normal_quantile(1.0 - (1.0 - level) / 2.0))
}

pub fn normal_ci(point: f64, se: f64, level: f64) -> Result<IntervalEstimate, InferenceError> {
    let z = critical_z(level)?;
    if !(se >= 0.0) || !se.is_finite() {
        return Err(InferenceError::InvalidSe(se));
    }
    let half = z * se;
    Ok(IntervalEstimate {
        point,
        lower: point - half,
        upper: point + half,
        level,
        method: CiMethod::Normal,
        se: Some(se),
        meta: IntervalMeta::default(),
    })
}

/// Linear-interpolation quantiles (type 7) of `values`, reordering it.
pub fn empirical_quantiles(values: &mut [f64], probs: &[f64]) -> Vec<f64> {
    let n = values.len();
    assert!(n > 0, "quantiles of an empty sample");
    probs
        .iter()
        .map(|&p| {
            let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
            let lo = h.floor() as usize;
            let frac = h - lo as f64;
            let (_, &mut at, rest) = values.select_nth_unstable_by(lo, f64::total_cmp);
            if frac == 0.0 || rest.is_empty() {
                at
            } else {
                let next = rest.iter().cloned().fold(f64::INFINITY, f64::min);
                at + frac * (next - at)
            }
        })
        .collect()
}

/// Percentile bootstrap of `beta3·betaM` by case resampling.
///
/// Replicate `b` draws its row indices from stream `b` of `seed`, so the
/// interval does not depend on the thread count.
pub fn bootstrap_ci(
    data: &Dataset,
    x: &str,
    m: &str,
    y: &str,
    replicates: usize,
    seed: u64,
    level: f64,
) -> Result<IntervalEstimate, InferenceError> {
    check_level(level)?;
    if replicates < MIN_BOOT_REPS {
        return Err(InferenceError::TooFewReplicates(replicates));
    }
    let [b3, _, bm, _] = fit_indirect_paths(data, x, m, y)?;
    let point = b3 * bm;
    let n = data.n();

    let estimates: Vec<Option<f64>> = (0..replicates)
        .into_par_iter()
        .map(|b| {
            let mut s = Stream::new(seed, b as u64);
            let rows: Vec<usize> = (0..n).map(|_| s.index(n)).collect();
            let resample = data.select_rows(&rows);
            match fit_indirect_paths(&resample, x, m, y) {
                Ok([b3, _, bm, _]) => Some(b3 * bm),
                Err(_) => None,
            }
        })
        .collect();
    let mut kept: Vec<f64> = estimates.iter().flatten().cloned().collect();
    let skipped = replicates - kept.len();
    if kept.is_empty() {
        return Err(InferenceError::AllResamplesDegenerate(replicates));
    }
    let w = 1.0 - level;
    let q = empirical_quantiles(&mut kept, &[w / 2.0, 1.0 - w / 2.0]);
    Ok(IntervalEstimate {
        point,
        lower: q[0],
        upper: q[1],
        level,
        method: CiMethod::Bootstrap,
        se: None,
        meta: IntervalMeta { draws: Some(replicates), seed: Some(seed), skipped },
    })
}

/// `draws` samples of `(mean1 + sd1·Z1)·(mean2 + sd2·Z2)`.
pub fn product_normal_draws(mean1: f64, sd1: f64, mean2: f64, sd2: f64, draws: usize, seed: u64) -> Vec<f64> {
    let blocks = draws.div_ceil(DRAW_BLOCK);
    let chunks: Vec<Vec<f64>> = (0..blocks)
        .into_par_iter()
        .map(|blk| {
            let len = DRAW_BLOCK.min(draws - blk * DRAW_BLOCK);
            let mut s = Stream::new(seed, blk as u64);
            (0..len)
                .map(|_| {
                    let a = s.normal(mean1, sd1);
                    let b = s.normal(mean2, sd2);
                    a * b
                })
                .collect()
        })
        .collect();
    chunks.concat()
}

pub fn product_distribution_ci_from(
    beta3: f64,
    se3: f64,
    beta_m: f64,
    se_m: f64,
    draws: usize,
    seed: u64,
    level: f64,
) -> Result<IntervalEstimate, InferenceError> {
    check_level(level)?;
    if draws < MIN_DRAWS {
        return Err(InferenceError::TooFewDraws(draws));
    }
    let mut sample = product_normal_draws(beta3, se3, beta_m, se_m, draws, seed);
    let w = 1.0 - level;
    let q = empirical_quantiles(&mut sample, &[w / 2.0, 1.0 - w / 2.0]);
    Ok(IntervalEstimate {
        point: beta3 * beta_m,
        lower: q[0],
        upper: q[1],
        level,
        method: CiMethod::ProductDistribution,
        se: None,
        meta: IntervalMeta { draws: Some(draws), seed: Some(seed), skipped: 0 },
    })
}

pub fn product_distribution_ci(
    fit: &MediationFit,
    draws: usize,
    seed: u64,
    level: f64,
) -> Result<IntervalEstimate, InferenceError> {
    product_distribution_ci_from(
        fit.beta3.estimate,
        fit.beta3.se,
        fit.beta_m.estimate,
        fit.beta_m.se,
        draws,
        seed,
        level,
    )
}

/// Sample excess kurtosis `m4 / m2² − 3` (population moments).
pub fn excess_kurtosis(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let (mut m2, mut m4) = (0.0, 0.0);
    for &x in xs {
        let d = (x - mean) * (x - mean);
        m2 += d;
        m4 += d * d;
    }
    m2 /= n;
    m4 /= n;
    m4 / (m2 * m2) - 3.0
}
