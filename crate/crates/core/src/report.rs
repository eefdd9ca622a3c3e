//! Analysis reports and their JSON / text renderings.
//!
//! JSON output has sorted keys and writes every float with 17 significant
//! digits, so rendering is byte-stable and parses back to the same values.

use std::fmt::Write as _;
use std::io;

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};
use serde_json::Value;

use crate::inference::{IntervalEstimate, SobelTest};
use crate::mediation::{AssumptionReport, CausalStepsVerdict, Consistency, EffectDecomposition, MediationFit};
use crate::model_dsl::RoleMap;
use crate::montecarlo::SimulationReport;
use crate::ols::Coefficient;
use crate::path_fit::{FitIndices, FitStatistics, IndexVerdict, ParameterEstimate, PathAnalysis, Verdict};

pub const TOOL_NAME: &str = env!("CARGO_PKG_NAME");
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Json,
    Text,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct InputDigest {
    pub data: Option<String>,
    pub model: Option<String>,
    pub design: Option<String>,
    pub n: Option<usize>,
    pub rows_dropped: Option<usize>,
    pub variables: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Settings {
    pub seed: Option<u64>,
    pub alpha: Option<f64>,
    pub level: Option<f64>,
    pub boot_reps: Option<usize>,
    pub draws: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NamedCoefficient {
    pub name: &'static str,
    pub equation: String,
    #[serde(flatten)]
    pub coefficient: Coefficient,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MediationBlock {
    pub x: String,
    pub m: String,
    pub y: String,
    pub n: usize,
    pub coefficients: Vec<NamedCoefficient>,
    pub r2: [f64; 3],
    pub effects: EffectDecomposition,
    pub causal_steps: CausalStepsVerdict,
    pub consistency: Consistency,
    pub diagnostics: AssumptionReport,
    pub advisories: Vec<String>,
}

impl MediationBlock {
    pub fn new(
        fit: &MediationFit,
        effects: EffectDecomposition,
        causal_steps: CausalStepsVerdict,
        diagnostics: AssumptionReport,
        advisories: Vec<String>,
    ) -> Self {
        let (x, m, y) = (&fit.x, &fit.m, &fit.y);
        let coefficients = vec![
            NamedCoefficient { name: "beta1", equation: format!("{y} ~ {x}"), coefficient: fit.beta1 },
            NamedCoefficient { name: "beta2", equation: format!("{y} ~ {x} + {m}"), coefficient: fit.beta2 },
            NamedCoefficient { name: "betaM", equation: format!("{y} ~ {x} + {m}"), coefficient: fit.beta_m },
            NamedCoefficient { name: "beta3", equation: format!("{m} ~ {x}"), coefficient: fit.beta3 },
        ];
        MediationBlock {
            x: x.clone(),
            m: m.clone(),
            y: y.clone(),
            n: fit.n,
            coefficients,
            r2: [fit.eq1.r2, fit.eq2.r2, fit.eq3.r2],
            effects,
            consistency: causal_steps.consistency,
            causal_steps,
            diagnostics,
            advisories,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InferenceBlock {
    pub sobel: Option<SobelTest>,
    pub intervals: Vec<IntervalEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathFitBlock {
    pub variables: Vec<String>,
    pub estimates: Vec<ParameterEstimate>,
    pub statistics: FitStatistics,
    pub null_statistics: FitStatistics,
    pub indices: FitIndices,
    pub verdicts: Vec<IndexVerdict>,
    pub implied_covariance: Vec<Vec<f64>>,
    pub sample_covariance: Vec<Vec<f64>>,
    pub advisories: Vec<String>,
}

impl PathFitBlock {
    pub fn new(analysis: &PathAnalysis, advisories: Vec<String>) -> Self {
        let rows = |m: &nalgebra::DMatrix<f64>| -> Vec<Vec<f64>> {
            (0..m.nrows()).map(|i| m.row(i).iter().cloned().collect()).collect()
        };
        PathFitBlock {
            variables: analysis.fit.matrices.names.clone(),
            estimates: analysis.fit.estimates(),
            statistics: analysis.fit.stats.clone(),
            null_statistics: analysis.null.clone(),
            indices: analysis.indices.clone(),
            verdicts: analysis.verdicts.clone(),
            implied_covariance: rows(&analysis.fit.implied),
            sample_covariance: rows(&analysis.fit.sample),
            advisories,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub inputs: InputDigest,
    pub settings: Settings,
    pub roles: Option<RoleMap>,
    pub mediation: Option<MediationBlock>,
    pub inference: Option<InferenceBlock>,
    pub pathfit: Option<PathFitBlock>,
    pub simulation: Option<SimulationReport>,
}

impl AnalysisReport {
    pub fn new(command: &str) -> Self {
        AnalysisReport {
            tool: TOOL_NAME.to_string(),
            version: TOOL_VERSION.to_string(),
            command: command.to_string(),
            inputs: InputDigest::default(),
            settings: Settings::default(),
            roles: None,
            mediation: None,
            inference: None,
            pathfit: None,
            simulation: None,
        }
    }
}

/// Pretty printer that writes floats with 17 significant digits.
struct SigDigits<'a>(PrettyFormatter<'a>);

impl Formatter for SigDigits<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{value:.16e}")
    }
    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, value as f64)
    }
    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Render an already-built JSON value in the canonical layout.
pub fn render_json_value(value: &Value) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SigDigits(PrettyFormatter::new()));
    value.serialize(&mut ser).expect("serializing a JSON value cannot fail");
    buf.push(b'\n');
    String::from_utf8(buf).expect("JSON is UTF-8")
}

/// Canonical JSON for any serializable value: sorted keys, 17-digit floats.
pub fn to_canonical_json<T: Serialize>(value: &T) -> String {
    // `Value` objects are backed by a sorted map.
    let v = serde_json::to_value(value).expect("report types serialize");
    render_json_value(&v)
}

pub fn render_report(report: &AnalysisReport, format: Format) -> String {
    match format {
        Format::Json => to_canonical_json(report),
        Format::Text => render_text(report),
    }
}

fn num(v: f64) -> String {
    if v.is_nan() {
        "n/a".into()
    } else if v != 0.0 && (v.abs() < 1e-4 || v.abs() >= 1e6) {
        format!("{v:.4e}")
    } else {
        format!("{v:.6}")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_else(|| "n/a".into())
}

fn numeric_cell(c: &str) -> bool {
    c == "n/a" || c == "-" || c.parse::<f64>().is_ok()
}

/// Numeric columns are right-aligned, everything else left-aligned.
fn table(out: &mut String, header: &[&str], rows: &[Vec<String>]) {
    let cols = header.len();
    let right: Vec<bool> = (0..cols)
        .map(|i| !rows.is_empty() && rows.iter().all(|r| r.get(i).is_some_and(|c| numeric_cell(c))))
        .collect();
    let mut width: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (i, c) in r.iter().enumerate().take(cols) {
            width[i] = width[i].max(c.chars().count());
        }
    }
    let line = |out: &mut String, cells: Vec<&str>| {
        let mut s = String::new();
        for (i, c) in cells.iter().enumerate() {
            if i > 0 {
                s.push_str("  ");
            }
            if right[i] {
                let _ = write!(s, "{c:>w$}", w = width[i]);
            } else {
                let _ = write!(s, "{c:<w$}", w = width[i]);
            }
        }
        out.push_str("  ");
        out.push_str(s.trim_end());
        out.push('\n');
    };
    line(out, header.to_vec());
    let rule: Vec<String> = width.iter().map(|w| "-".repeat(*w)).collect();
    line(out, rule.iter().map(|s| s.as_str()).collect());
    for r in rows {
        line(out, r.iter().map(|s| s.as_str()).collect());
    }
}

fn section(out: &mut String, title: &str) {
    if !out.is_empty() {
        out.push('\n');
    }
    out.push_str(title);
    out.push('\n');
}

pub fn render_text(report: &AnalysisReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} {} {}", report.tool, report.version, report.command);
    let inp = &report.inputs;
    for (label, v) in [("data", &inp.data), ("model", &inp.model), ("design", &inp.design)] {
        if let Some(v) = v {
            let _ = writeln!(out, "  {label}: {v}");
        }
    }
    match (inp.n, inp.rows_dropped) {
        (Some(n), Some(d)) => {
            let _ = writeln!(out, "  n: {n} (rows dropped: {d})");
        }
        (Some(n), None) => {
            let _ = writeln!(out, "  n: {n}");
        }
        _ => {}
    }
    if let Some(seed) = report.settings.seed {
        let _ = writeln!(out, "  seed: {seed}");
    }

    if let Some(roles) = &report.roles {
        section(&mut out, "Variable roles");
        let rows: Vec<Vec<String>> = roles.iter().map(|(n, r)| vec![n.clone(), r.to_string()]).collect();
        table(&mut out, &["variable", "role"], &rows);
    }

    if let Some(m) = &report.mediation {
        render_mediation(&mut out, m);
    }
    if let Some(inf) = &report.inference {
        section(&mut out, "Indirect effect inference");
        if let Some(s) = &inf.sobel {
            let _ = writeln!(out, "  Sobel test: estimate {}  se {}  z {}  p {}", num(s.estimate), num(s.se), num(s.z), num(s.p));
        }
        let rows: Vec<Vec<String>> = inf
            .intervals
            .iter()
            .map(|ci| {
                vec![
                    ci.method.name().to_string(),
                    num(ci.point),
                    num(ci.lower),
                    num(ci.upper),
                    num(ci.level),
                    ci.meta.draws.map(|d| d.to_string()).unwrap_or_else(|| "-".into()),
                ]
            })
            .collect();
        table(&mut out, &["method", "point", "lower", "upper", "level", "draws"], &rows);
    }
    if let Some(p) = &report.pathfit {
        render_pathfit(&mut out, p);
    }
    if let Some(s) = &report.simulation {
        render_simulation(&mut out, s);
    }
    out
}

fn render_mediation(out: &mut String, m: &MediationBlock) {
    section(out, &format!("Mediation: {} -> {} -> {} (n = {})", m.x, m.m, m.y, m.n));
    let rows: Vec<Vec<String>> = m
        .coefficients
        .iter()
        .map(|c| {
            vec![
                c.name.to_string(),
                c.equation.clone(),
                num(c.coefficient.estimate),
                num(c.coefficient.se),
                num(c.coefficient.t),
                num(c.coefficient.p),
            ]
        })
        .collect();
    table(out, &["coef", "equation", "estimate", "se", "t", "p"], &rows);

    section(out, "Effects");
    let e = &m.effects;
    let rows = vec![
        vec!["direct".into(), num(e.direct)],
        vec!["indirect (product)".into(), num(e.indirect_product)],
        vec!["indirect (difference)".into(), num(e.indirect_difference)],
        vec!["total".into(), num(e.total_eq1)],
    ];
    table(out, &["effect", "value"], &rows);

    section(out, &format!("Causal steps (alpha = {})", m.causal_steps.alpha));
    let labels = ["X -> Y significant", "X -> M significant", "M -> Y | X significant", "|beta1| > |beta2|"];
    let rows: Vec<Vec<String>> = labels
        .iter()
        .zip(m.causal_steps.step_results)
        .map(|(l, ok)| vec![l.to_string(), if ok { "pass".into() } else { "fail".into() }])
        .collect();
    table(out, &["step", "result"], &rows);
    let _ = writeln!(out, "  outcome: {:?}", m.causal_steps.outcome);
    let _ = writeln!(out, "  consistency: {:?}", m.consistency);
    if !m.causal_steps.note.is_empty() {
        let _ = writeln!(out, "  note: {}", m.causal_steps.note);
    }

    section(out, "Diagnostics");
    let i = &m.diagnostics.xm_interaction;
    let _ = writeln!(out, "  X*M interaction: estimate {}  t {}  p {}", num(i.estimate), num(i.t), num(i.p));
    let _ = writeln!(out, "  residual correlation (descriptive): {}", num(m.diagnostics.residual_correlation));
    out.push_str("  Assumptions that cannot be tested from the data:\n");
    for a in &m.diagnostics.untestable {
        let _ = writeln!(out, "    - {a}");
    }
    for a in &m.advisories {
        let _ = writeln!(out, "  warning: {a}");
    }
}

fn render_pathfit(out: &mut String, p: &PathFitBlock) {
    section(out, "Parameter estimates");
    let rows: Vec<Vec<String>> = p
        .estimates
        .iter()
        .map(|e| vec![format!("{} {} {}", e.lhs, e.op, e.rhs), num(e.estimate)])
        .collect();
    table(out, &["parameter", "estimate"], &rows);

    section(out, "Model fit");
    let s = &p.statistics;
    let _ = writeln!(
        out,
        "  chi-square {}  df {}  p {}  (null: chi-square {}  df {})",
        num(s.chi_square),
        s.df,
        num(s.p_value),
        num(p.null_statistics.chi_square),
        p.null_statistics.df
    );
    let rows: Vec<Vec<String>> = p
        .verdicts
        .iter()
        .map(|v| vec![v.index.to_string(), opt(v.value), verdict_label(v.verdict).to_string(), v.threshold.to_string()])
        .collect();
    table(out, &["index", "value", "verdict", "threshold"], &rows);
    for a in &p.advisories {
        let _ = writeln!(out, "  warning: {a}");
    }
}

fn verdict_label(v: Verdict) -> &'static str {
    v.label()
}

fn render_simulation(out: &mut String, s: &SimulationReport) {
    section(
        out,
        &format!(
            "Simulation: true indirect {}  replications {}/{} (degenerate {})",
            num(s.true_indirect),
            s.replications_used,
            s.replications_requested,
            s.degenerate
        ),
    );
    let rows: Vec<Vec<String>> = s
        .estimators
        .iter()
        .map(|e| {
            vec![
                e.estimator.to_string(),
                num(e.mean),
                num(e.bias),
                num(e.empirical_sd),
                num(e.mean_se),
                num(e.se_relative_bias),
            ]
        })
        .collect();
    table(out, &["estimator", "mean", "bias", "emp. sd", "mean se", "se rel. bias"], &rows);
    out.push('\n');
    let rows: Vec<Vec<String>> = s
        .methods
        .iter()
        .map(|m| {
            vec![
                m.method.name().to_string(),
                num(m.coverage),
                num(m.miss_below),
                num(m.miss_above),
                num(m.rejection_rate),
            ]
        })
        .collect();
    table(out, &["method", "coverage", "miss below", "miss above", "rejection"], &rows);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_have_seventeen_digits_and_sorted_keys() {
        #[derive(Serialize)]
        struct T {
            zeta: f64,
            alpha: Option<f64>,
            count: usize,
            nan: f64,
        }
        let s = to_canonical_json(&T { zeta: 0.1, alpha: None, count: 3, nan: f64::NAN });
        assert_eq!(
            s,
            "{\n  \"alpha\": null,\n  \"count\": 3,\n  \"nan\": null,\n  \"zeta\": 1.0000000000000001e-1\n}\n"
        );
        let v: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(render_json_value(&v), s);
    }

    #[test]
    fn text_table_alignment() {
        let mut out = String::new();
        table(&mut out, &["a", "value"], &[vec!["long name".into(), "1.5".into()], vec!["x".into(), "10.25".into()]]);
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines[0], "  a          value");
        assert_eq!(lines[2], "  long name    1.5");
        assert_eq!(lines[3], "  x          10.25");
    }
}
