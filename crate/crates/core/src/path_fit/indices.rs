//! Fit indices and their conventional cutoffs.

use nalgebra::DMatrix;
use serde::Serialize;

use super::{moment_count, FitStatistics};

/// `None` marks an index that is not defined for the given degrees of
/// freedom (reported as not applicable).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitIndices {
    pub cmin_df: Option<f64>,
    pub gfi: Option<f64>,
    pub agfi: Option<f64>,
    pub rmr: f64,
    pub rmsea: Option<f64>,
    pub nfi: Option<f64>,
    pub tli: Option<f64>,
    pub cfi: Option<f64>,
    pub null_chi_square: f64,
    pub null_df: usize,
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den != 0.0).then(|| num / den).filter(|v| v.is_finite())
}

/// Pure arithmetic over the two fits and the residual covariances.
pub fn compute_indices(
    target: &FitStatistics,
    null: &FitStatistics,
    sample: &DMatrix<f64>,
    implied: &DMatrix<f64>,
) -> FitIndices {
    let chi = target.chi_square;
    let df = target.df as f64;
    let chi0 = null.chi_square;
    let df0 = null.df as f64;
    let n = target.n as f64;

    let cmin_df = ratio(chi, df);

    let nc = (chi - df).max(0.0);
    let nc0 = (chi0 - df0).max(0.0);
    // A zero baseline noncentrality leaves nothing to explain: a model with
    // zero noncentrality is then a perfect fit, any other a total misfit.
    let gfi = Some(if nc0 > 0.0 { 1.0 - (nc / n) / (nc0 / n) } else if nc == 0.0 { 1.0 } else { 0.0 })
        .map(|g| g.clamp(0.0, 1.0));
    let agfi = match (gfi, target.df) {
        (Some(g), d) if d > 0 => Some(1.0 - (1.0 - g) * (df0 / df)),
        _ => None,
    };

    let p = sample.nrows();
    let mut sq = 0.0;
    for i in 0..p {
        for j in i..p {
            sq += (sample[(i, j)] - implied[(i, j)]).powi(2);
        }
    }
    let rmr = (sq / moment_count(p) as f64).sqrt();

    let rmsea = (target.df > 0).then(|| (nc / ((n - 1.0) * df)).sqrt());
    let nfi = ratio(chi0 - chi, chi0);
    let tli = match (ratio(chi0, df0), ratio(chi, df)) {
        (Some(r0), Some(r)) => ratio(r0 - r, r0 - 1.0),
        _ => None,
    };
    let cfi_den = nc.max(nc0);
    let cfi = Some(if cfi_den > 0.0 { 1.0 - nc / cfi_den } else { 1.0 });

    FitIndices { cmin_df, gfi, agfi, rmr, rmsea, nfi, tli, cfi, null_chi_square: chi0, null_df: null.df }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Good,
    Acceptable,
    Borderline,
    Poor,
    /// No cutoff exists; the value is reported for information.
    Descriptive,
    NotApplicable,
}

impl Verdict {
    pub fn label(self) -> &'static str {
        match self {
            Verdict::Good => "good",
            Verdict::Acceptable => "acceptable",
            Verdict::Borderline => "borderline",
            Verdict::Poor => "poor",
            Verdict::Descriptive => "descriptive",
            Verdict::NotApplicable => "n/a",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndexVerdict {
    pub index: &'static str,
    pub value: Option<f64>,
    pub verdict: Verdict,
    pub threshold: &'static str,
}

fn at_least_090(index: &'static str, value: Option<f64>) -> IndexVerdict {
    let verdict = match value {
        None => Verdict::NotApplicable,
        Some(v) if v >= 0.90 => Verdict::Good,
        Some(_) => Verdict::Poor,
    };
    IndexVerdict { index, value, verdict, threshold: ">= 0.90 good" }
}

fn above_090(index: &'static str, value: Option<f64>) -> IndexVerdict {
    let verdict = match value {
        None => Verdict::NotApplicable,
        Some(v) if v > 0.90 => Verdict::Good,
        Some(_) => Verdict::Poor,
    };
    IndexVerdict { index, value, verdict, threshold: "> 0.90 good" }
}

pub fn index_verdicts(idx: &FitIndices, target: &FitStatistics) -> Vec<IndexVerdict> {
    let mut out = Vec::with_capacity(11);
    out.push(IndexVerdict {
        index: "chi_square_p",
        value: (target.df > 0).then_some(target.p_value),
        verdict: if target.df == 0 {
            Verdict::NotApplicable
        } else if target.p_value > 0.05 {
            Verdict::Good
        } else {
            Verdict::Poor
        },
        threshold: "p > 0.05 (chi-square not significant)",
    });
    out.push(IndexVerdict {
        index: "cmin_df_liberal",
        value: idx.cmin_df,
        verdict: match idx.cmin_df {
            None => Verdict::NotApplicable,
            Some(v) if v <= 5.0 => Verdict::Acceptable,
            Some(_) => Verdict::Poor,
        },
        threshold: "<= 5 adequate",
    });
    out.push(IndexVerdict {
        index: "cmin_df_conservative",
        value: idx.cmin_df,
        verdict: match idx.cmin_df {
            None => Verdict::NotApplicable,
            Some(v) if v < 2.0 => Verdict::Good,
            Some(v) if v <= 3.0 => Verdict::Borderline,
            Some(_) => Verdict::Poor,
        },
        threshold: "< 2 good, 2-3 borderline, > 3 not acceptable",
    });
    out.push(at_least_090("gfi", idx.gfi));
    out.push(at_least_090("agfi", idx.agfi));
    out.push(IndexVerdict {
        index: "rmr",
        value: Some(idx.rmr),
        verdict: Verdict::Descriptive,
        threshold: "smaller is better",
    });
    out.push(IndexVerdict {
        index: "rmsea",
        value: idx.rmsea,
        verdict: match idx.rmsea {
            None => Verdict::NotApplicable,
            Some(v) if v <= 0.05 => Verdict::Good,
            Some(v) if v <= 0.08 => Verdict::Acceptable,
            Some(_) => Verdict::Poor,
        },
        threshold: "<= 0.05 close, 0.05-0.08 acceptable, > 0.08 poor",
    });
    out.push(at_least_090("nfi", idx.nfi));
    out.push(above_090("tli", idx.tli));
    out.push(at_least_090("cfi", idx.cfi));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(chi: f64, df: usize, n: usize) -> FitStatistics {
        FitStatistics { chi_square: chi, df, p_value: 0.5, f_min: chi / (n as f64 - 1.0), n, p: 3, converged: true, iterations: 0 }
    }

    fn zero3() -> DMatrix<f64> {
        DMatrix::zeros(3, 3)
    }

    #[test]
    fn hand_computed_indices() {
        let idx = compute_indices(&stats(10.0, 5, 101), &stats(100.0, 10, 101), &zero3(), &zero3());
        let close = |a: Option<f64>, b: f64, tol: f64| (a.unwrap() - b).abs() < tol;
        assert!(close(idx.cmin_df, 2.0, 1e-15));
        assert!(close(idx.rmsea, 0.1, 1e-15));
        assert!(close(idx.nfi, 0.9, 1e-15));
        assert!(close(idx.tli, 8.0 / 9.0, 1e-15));
        assert!(close(idx.cfi, 1.0 - 5.0 / 90.0, 1e-15));
        assert!(close(idx.gfi, 1.0 - 5.0 / 90.0, 1e-15));
        assert!(close(idx.agfi, 1.0 - (5.0 / 90.0) * 2.0, 1e-15));
        assert_eq!(idx.rmr, 0.0);
    }

    #[test]
    fn clamps_at_zero_noncentrality() {
        let idx = compute_indices(&stats(5.0, 5, 101), &stats(100.0, 10, 101), &zero3(), &zero3());
        assert_eq!(idx.rmsea, Some(0.0));
        assert_eq!(idx.cfi, Some(1.0));
        let idx = compute_indices(&stats(3.0, 5, 101), &stats(100.0, 10, 101), &zero3(), &zero3());
        assert_eq!(idx.rmsea, Some(0.0));
        assert_eq!(idx.gfi, Some(1.0));
    }

    #[test]
    fn saturated_model_not_applicable() {
        let idx = compute_indices(&stats(0.0, 0, 101), &stats(40.0, 3, 101), &zero3(), &zero3());
        assert_eq!(idx.cmin_df, None);
        assert_eq!(idx.rmsea, None);
        assert_eq!(idx.agfi, None);
        assert_eq!(idx.tli, None);
        assert_eq!(idx.cfi, Some(1.0));
        assert_eq!(idx.nfi, Some(1.0));
    }

    #[test]
    fn rmr_over_unique_elements() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let implied = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 1.0]);
        let idx = compute_indices(&stats(1.0, 1, 50), &stats(10.0, 1, 50), &s, &implied);
        assert!((idx.rmr - (0.09f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn thresholds() {
        let idx = FitIndices {
            cmin_df: Some(2.0),
            gfi: Some(0.95),
            agfi: Some(0.85),
            rmr: 0.03,
            rmsea: Some(0.06),
            nfi: Some(0.90),
            tli: Some(0.90),
            cfi: Some(0.9444),
            null_chi_square: 100.0,
            null_df: 10,
        };
        let v = index_verdicts(&idx, &stats(10.0, 5, 101));
        let get = |name: &str| v.iter().find(|x| x.index == name).unwrap().verdict;
        assert_eq!(get("cmin_df_liberal"), Verdict::Acceptable);
        assert_eq!(get("cmin_df_conservative"), Verdict::Borderline);
        assert_eq!(get("gfi"), Verdict::Good);
        assert_eq!(get("agfi"), Verdict::Poor);
        assert_eq!(get("rmsea"), Verdict::Acceptable);
        assert_eq!(get("nfi"), Verdict::Good);
        // "larger than 0.90"
        assert_eq!(get("tli"), Verdict::Poor);
        assert_eq!(get("cfi"), Verdict::Good);
        assert_eq!(get("rmr"), Verdict::Descriptive);

        let none = FitIndices { cmin_df: None, rmsea: None, ..idx };
        let v = index_verdicts(&none, &stats(0.0, 0, 101));
        assert!(v.iter().filter(|x| x.index.starts_with("cmin") || x.index == "rmsea" || x.index == "chi_square_p")
            .all(|x| x.verdict == Verdict::NotApplicable));
    }
}
