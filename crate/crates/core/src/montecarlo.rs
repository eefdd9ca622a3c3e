//! Seeded simulation studies of the single-mediator model.
//!
//! Data are generated from
//!
//! ```text
//! X ~ N(0, sd_x²)
//! M = a·X + e2,            e2 ~ N(0, sd_e2²)
//! Y = tau_prime·X + b·M + e1,  e1 ~ N(0, sd_e1²)
//! ```
//!
//! Replication `r` draws its data from stream `r` of the master seed and
//! its interval seeds from labelled child seeds, so a study is reproducible
//! regardless of how replications are scheduled.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data_io::Dataset;
use crate::inference::{
    bootstrap_ci, normal_ci, product_distribution_ci, sobel_se, CiMethod, InferenceError, IntervalEstimate,
    DEFAULT_BOOT_REPS, DEFAULT_DRAWS, DEFAULT_LEVEL,
};
use crate::mediation::{decompose_effects, fit_mediation};
use crate::rng::{derive_seed, Stream};

const LABEL_BOOTSTRAP: u64 = 1;
const LABEL_PRODUCT: u64 = 2;

/// Largest tolerated share of degenerate replications.
pub const MAX_DEGENERATE_SHARE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimulationError {
    #[error("invalid design: {0}")]
    InvalidDesign(String),
    #[error("design has no seed")]
    MissingSeed,
    #[error("all {0} replications were degenerate")]
    AllReplicationsDegenerate(usize),
    #[error("{degenerate} of {total} replications were degenerate (limit 1%)")]
    TooManyDegenerate { degenerate: usize, total: usize },
    #[error(transparent)]
    Inference(#[from] InferenceError),
}

fn default_sd() -> f64 {
    1.0
}
fn default_level() -> f64 {
    DEFAULT_LEVEL
}
fn default_methods() -> Vec<CiMethod> {
    vec![CiMethod::Normal]
}
fn default_boot() -> usize {
    DEFAULT_BOOT_REPS
}
fn default_draws() -> usize {
    DEFAULT_DRAWS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationDesign {
    pub a: f64,
    pub b: f64,
    pub tau_prime: f64,
    #[serde(default = "default_sd")]
    pub sd_x: f64,
    #[serde(default = "default_sd")]
    pub sd_e2: f64,
    #[serde(default = "default_sd")]
    pub sd_e1: f64,
    pub n: usize,
    #[serde(rename = "R")]
    pub replications: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default = "default_methods")]
    pub methods: Vec<CiMethod>,
    #[serde(rename = "B", default = "default_boot")]
    pub boot_reps: usize,
    #[serde(default = "default_draws")]
    pub draws: usize,
}

impl SimulationDesign {
    /// Unit variances, Normal intervals at 95%, default budgets.
    pub fn new(a: f64, b: f64, tau_prime: f64, n: usize, replications: usize, seed: u64) -> Self {
        SimulationDesign {
            a,
            b,
            tau_prime,
            sd_x: 1.0,
            sd_e2: 1.0,
            sd_e1: 1.0,
            n,
            replications,
            seed: Some(seed),
            level: DEFAULT_LEVEL,
            methods: default_methods(),
            boot_reps: DEFAULT_BOOT_REPS,
            draws: DEFAULT_DRAWS,
        }
    }

    pub fn with_methods(mut self, methods: &[CiMethod]) -> Self {
        self.methods = methods.to_vec();
        self
    }

    pub fn validate(&self) -> Result<(), SimulationError> {
        let bad = |m: String| Err(SimulationError::InvalidDesign(m));
        for (name, v) in [("sd_x", self.sd_x), ("sd_e2", self.sd_e2), ("sd_e1", self.sd_e1)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [("a", self.a), ("b", self.b), ("tau_prime", self.tau_prime)] {
            if !v.is_finite() {
                return bad(format!("{name} must be finite"));
            }
        }
        if self.n < 10 {
            return bad(format!("n must be at least 10, got {}", self.n));
        }
        if self.replications < 1 {
            return bad("R must be at least 1".into());
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return bad(format!("level must lie in (0, 1), got {}", self.level));
        }
        if self.methods.is_empty() {
            return bad("methods must not be empty".into());
        }
        Ok(())
    }

    pub fn true_indirect(&self) -> f64 {
        self.a * self.b
    }

    fn seed(&self) -> Result<u64, SimulationError> {
        self.seed.ok_or(SimulationError::MissingSeed)
    }
}

/// Columns `X`, `M`, `Y` for replication `index`.
pub fn generate_dataset(design: &SimulationDesign, index: u64) -> Result<Dataset, SimulationError> {
    design.validate()?;
    let mut s = Stream::new(design.seed()?, index);
    let n = design.n;
    let (mut x, mut m, mut y) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..n {
        let xi = s.normal(0.0, design.sd_x);
        let mi = design.a * xi + s.normal(0.0, design.sd_e2);
        let yi = design.tau_prime * xi + design.b * mi + s.normal(0.0, design.sd_e1);
        x.push(xi);
        m.push(mi);
        y.push(yi);
    }
    Ok(Dataset::from_columns(vec![("X".into(), x), ("M".into(), m), ("Y".into(), y)])
        .expect("generated columns are well formed"))
}

#[derive(Debug, Clone)]
struct Replication {
    product: f64,
    difference: f64,
    se: f64,
    identity_error: f64,
    intervals: Vec<IntervalEstimate>,
}

fn run_replication(design: &SimulationDesign, seed: u64, r: u64) -> Result<Option<Replication>, SimulationError> {
    let data = generate_dataset(design, r)?;
    let fit = match fit_mediation(&data, "X", "M", "Y") {
        Ok(f) => f,
        Err(e) if e.is_rank_deficient() => return Ok(None),
        Err(e) => return Err(InferenceError::from(e).into()),
    };
    let dec = decompose_effects(&fit);
    let se = sobel_se(&fit);
    let mut intervals = Vec::with_capacity(design.methods.len());
    for &method in &design.methods {
        let ci = match method {
            CiMethod::Normal => normal_ci(dec.indirect_product, se, design.level)?,
            CiMethod::Bootstrap => {
                let s = derive_seed(seed, LABEL_BOOTSTRAP, r);
                match bootstrap_ci(&data, "X", "M", "Y", design.boot_reps, s, design.level) {
                    Ok(ci) => ci,
                    Err(InferenceError::AllResamplesDegenerate(_)) => return Ok(None),
                    Err(e) => return Err(e.into()),
                }
            }
            CiMethod::ProductDistribution => {
                let s = derive_seed(seed, LABEL_PRODUCT, r);
                product_distribution_ci(&fit, design.draws, s, design.level)?
            }
        };
        intervals.push(ci);
    }
    Ok(Some(Replication {
        product: dec.indirect_product,
        difference: dec.indirect_difference,
        se,
        identity_error: dec.identity_error(),
        intervals,
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorSummary {
    pub estimator: &'static str,
    pub mean: f64,
    pub bias: f64,
    pub empirical_sd: f64,
    /// Mean delta-method standard error.
    pub mean_se: f64,
    /// `mean_se / empirical_sd − 1`.
    pub se_relative_bias: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: CiMethod,
    pub covered: usize,
    /// True value below the lower limit.
    pub below: usize,
    /// True value above the upper limit.
    pub above: usize,
    /// Intervals excluding zero.
    pub rejections: usize,
    pub coverage: f64,
    pub miss_below: f64,
    pub miss_above: f64,
    pub rejection_rate: f64,
    pub mean_lower: f64,
    pub mean_upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub design: SimulationDesign,
    pub true_indirect: f64,
    pub replications_requested: usize,
    pub replications_used: usize,
    pub degenerate: usize,
    pub estimators: Vec<EstimatorSummary>,
    pub methods: Vec<MethodSummary>,
    /// Largest relative gap between the difference and product estimators.
    pub max_identity_error: f64,
}

impl SimulationReport {
    pub fn method(&self, m: CiMethod) -> Option<&MethodSummary> {
        self.methods.iter().find(|s| s.method == m)
    }

    pub fn estimator(&self, name: &str) -> Option<&EstimatorSummary> {
        self.estimators.iter().find(|s| s.estimator == name)
    }
}

fn summarize(name: &'static str, values: &[f64], ses: &[f64], truth: f64) -> EstimatorSummary {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0)
    } else {
        0.0
    };
    let empirical_sd = var.sqrt();
    let mean_se = ses.iter().sum::<f64>() / k;
    EstimatorSummary {
        estimator: name,
        mean,
        bias: mean - truth,
        empirical_sd,
        mean_se,
        se_relative_bias: if empirical_sd > 0.0 { mean_se / empirical_sd - 1.0 } else { f64::NAN },
    }
}

pub fn run_study(design: &SimulationDesign) -> Result<SimulationReport, SimulationError> {
    design.validate()?;
    let seed = design.seed()?;
    let total = design.replications;

    let outcomes: Vec<Result<Option<Replication>, SimulationError>> = (0..total as u64)
        .into_par_iter()
        .map(|r| run_replication(design, seed, r))
        .collect();
    let mut reps = Vec::with_capacity(total);
    for o in outcomes {
        if let Some(rep) = o? {
            reps.push(rep);
        }
    }
    let used = reps.len();
    let degenerate = total - used;
    if used == 0 {
        return Err(SimulationError::AllReplicationsDegenerate(total));
    }
    if degenerate as f64 > MAX_DEGENERATE_SHARE * total as f64 {
        return Err(SimulationError::TooManyDegenerate { degenerate, total });
    }

    let truth = design.true_indirect();
    let ses: Vec<f64> = reps.iter().map(|r| r.se).collect();
    let products: Vec<f64> = reps.iter().map(|r| r.product).collect();
    let differences: Vec<f64> = reps.iter().map(|r| r.difference).collect();
    let estimators = vec![
        summarize("product", &products, &ses, truth),
        summarize("difference", &differences, &ses, truth),
    ];

    let k = used as f64;
    let methods = design
        .methods
        .iter()
        .enumerate()
        .map(|(mi, &method)| {
            let (mut covered, mut below, mut above, mut rejections) = (0, 0, 0, 0);
            let (mut lo_sum, mut hi_sum) = (0.0, 0.0);
            for rep in &reps {
                let ci = &rep.intervals[mi];
                if truth < ci.lower {
                    below += 1;
                } else if truth > ci.upper {
                    above += 1;
                } else {
                    covered += 1;
                }
                if !ci.contains(0.0) {
                    rejections += 1;
                }
                lo_sum += ci.lower;
                hi_sum += ci.upper;
            }
            MethodSummary {
                method,
                covered,
                below,
                above,
                rejections,
                coverage: covered as f64 / k,
                miss_below: below as f64 / k,
                miss_above: above as f64 / k,
                rejection_rate: rejections as f64 / k,
                mean_lower: lo_sum / k,
                mean_upper: hi_sum / k,
            }
        })
        .collect();

    Ok(SimulationReport {
        design: design.clone(),
        true_indirect: truth,
        replications_requested: total,
        replications_used: used,
        degenerate,
        estimators,
        methods,
        max_identity_error: reps.iter().map(|r| r.identity_error).fold(0.0, f64::max),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_is_deterministic() {
        let d = SimulationDesign::new(0.5, 0.5, 0.0, 50, 1, 17);
        assert_eq!(generate_dataset(&d, 3).unwrap(), generate_dataset(&d, 3).unwrap());
        assert_ne!(generate_dataset(&d, 3).unwrap(), generate_dataset(&d, 4).unwrap());
    }

    #[test]
    fn design_validation() {
        let mut d = SimulationDesign::new(0.5, 0.5, 0.0, 50, 10, 1);
        d.sd_e1 = 0.0;
        assert!(matches!(d.validate(), Err(SimulationError::InvalidDesign(_))));
        let mut d = SimulationDesign::new(0.5, 0.5, 0.0, 9, 10, 1);
        assert!(d.validate().is_err());
        d.n = 10;
        d.seed = None;
        assert_eq!(run_study(&d), Err(SimulationError::MissingSeed));
    }

    #[test]
    fn design_json_field_names() {
        let json = r#"{"a":0.3,"b":0.3,"tau_prime":0,"sd_x":1,"sd_e2":1,"sd_e1":1,"n":100,"R":20,
            "seed":5,"level":0.9,"methods":["Normal","ProductDistribution"],"B":500,"draws":20000}"#;
        let d: SimulationDesign = serde_json::from_str(json).unwrap();
        assert_eq!(d.replications, 20);
        assert_eq!(d.boot_reps, 500);
        assert_eq!(d.methods, [CiMethod::Normal, CiMethod::ProductDistribution]);
        let back: SimulationDesign = serde_json::from_str(&serde_json::to_string(&d).unwrap()).unwrap();
        assert_eq!(back, d);
        assert!(serde_json::from_str::<SimulationDesign>(r#"{"a":1,"b":1,"tau_prime":0,"n":10,"R":1,"x":2}"#).is_err());
    }

    #[test]
    fn small_study_partitions_counts() {
        let d = SimulationDesign::new(0.3, 0.3, 0.1, 60, 200, 99)
            .with_methods(&[CiMethod::Normal, CiMethod::ProductDistribution]);
        let rep = run_study(&d).unwrap();
        assert_eq!(rep.replications_used, 200);
        for m in &rep.methods {
            assert_eq!(m.covered + m.below + m.above, rep.replications_used);
            assert!((m.coverage + m.miss_below + m.miss_above - 1.0).abs() < 1e-12);
        }
        assert!(rep.max_identity_error < 1e-10);
        assert_eq!(run_study(&d).unwrap(), rep);
    }
}
