mod common;

use std::path::{Path, PathBuf};
use std::process::Command;

use pathmed::report::render_json_value;
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pathmed"))
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let data = common::mediation_data(150, 0.4, 0.4, 0.1, 4);
        let mut csv = String::from("X,M,Y\n");
        for i in 0..data.n() {
            let r = data.values.row(i);
            csv.push_str(&format!("{},{},{}\n", r[0], r[1], r[2]));
        }
        std::fs::write(dir.path().join("d.csv"), csv).unwrap();
        std::fs::write(dir.path().join("triangle.path"), "M ~ X\nY ~ X + M\n").unwrap();
        std::fs::write(dir.path().join("chain.path"), "M ~ X\nY ~ M\n").unwrap();
        std::fs::write(dir.path().join("missingvar.path"), "M ~ X\nY ~ Q\n").unwrap();
        std::fs::write(dir.path().join("cycle.path"), "M ~ X\nX ~ M\n").unwrap();
        std::fs::write(
            dir.path().join("design.json"),
            r#"{"a":0.3,"b":0.3,"tau_prime":0.0,"n":60,"R":100,"methods":["normal","product"],"draws":20000}"#,
        )
        .unwrap();
        Fixture { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn run(&self, args: &[&str]) -> (i32, String, String) {
        let out = bin().current_dir(self.dir.path()).args(args).output().unwrap();
        (
            out.status.code().unwrap(),
            String::from_utf8(out.stdout).unwrap(),
            String::from_utf8(out.stderr).unwrap(),
        )
    }
}

fn schema() -> Value {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/report.schema.json");
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn assert_valid(report: &str) {
    let validator = jsonschema::validator_for(&schema()).unwrap();
    let v: Value = serde_json::from_str(report).unwrap();
    let errors: Vec<String> = validator.iter_errors(&v).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{errors:#?}");
}

#[test]
fn parse_prints_roles() {
    let f = Fixture::new();
    let (code, out, _) = f.run(&["parse", "--model", "triangle.path", "--format", "text"]);
    assert_eq!(code, 0);
    let role = |v: &str| out.lines().find(|l| l.trim_start().starts_with(&format!("{v} "))).unwrap().to_string();
    assert!(role("X").ends_with("exogenous"));
    assert!(role("M").ends_with("mediator"));
    assert!(role("Y").ends_with("endogenous"));
}

#[test]
fn exit_codes() {
    let f = Fixture::new();
    let (code, _, err) = f.run(&["mediate", "--data", "d.csv", "--x", "X", "--m", "M", "--y", "Y", "--ci", "bootstrap"]);
    assert_eq!(code, 2);
    assert!(err.contains("--seed"));

    let (code, _, err) = f.run(&["fit", "--data", "d.csv", "--model", "missingvar.path"]);
    assert_eq!(code, 3);
    assert!(err.contains("`Q` is not a data column"), "{err}");

    assert_eq!(f.run(&["fit", "--data", "nope.csv", "--model", "chain.path"]).0, 3);
    assert_eq!(f.run(&["parse", "--model", "cycle.path"]).0, 3);
    assert_eq!(f.run(&["mediate", "--data", "d.csv", "--x", "X", "--m", "Q", "--y", "Y"]).0, 3);
    assert_eq!(f.run(&["frobnicate"]).0, 2);
    assert_eq!(f.run(&["mediate", "--data", "d.csv", "--x", "X", "--m", "M", "--y", "Y", "--alpha", "1.5"]).0, 2);
    assert_eq!(f.run(&["simulate", "--design", "design.json"]).0, 2);
    assert_eq!(f.run(&["--help"]).0, 0);

    // Perfectly collinear mediator: analysis error.
    let mut csv = String::from("X,M,Y\n");
    for i in 0..20 {
        let x = i as f64;
        csv.push_str(&format!("{x},{},{}\n", 2.0 * x, (i * i % 7) as f64));
    }
    std::fs::write(f.path("collinear.csv"), csv).unwrap();
    let (code, _, err) = f.run(&["mediate", "--data", "collinear.csv", "--x", "X", "--m", "M", "--y", "Y"]);
    assert_eq!(code, 1, "{err}");
}

#[test]
fn reports_validate_and_round_trip() {
    let f = Fixture::new();
    let runs: [&[&str]; 4] = [
        &["mediate", "--data", "d.csv", "--x", "X", "--m", "M", "--y", "Y", "--ci", "all", "--seed", "3", "--boot-reps", "200", "--draws", "20000"],
        &["fit", "--data", "d.csv", "--model", "chain.path"],
        &["simulate", "--design", "design.json", "--seed", "4"],
        &["parse", "--model", "triangle.path"],
    ];
    for args in runs {
        let (code, out, err) = f.run(args);
        assert_eq!(code, 0, "{err}");
        assert_valid(&out);
        let v: Value = serde_json::from_str(&out).unwrap();
        assert_eq!(render_json_value(&v), out);
    }
}

#[test]
fn identical_invocations_are_byte_identical() {
    let f = Fixture::new();
    let med = ["mediate", "--data", "d.csv", "--x", "X", "--m", "M", "--y", "Y", "--ci", "all", "--seed", "11", "--boot-reps", "300", "--draws", "20000"];
    let sim = ["simulate", "--design", "design.json", "--seed", "11"];
    for args in [&med[..], &sim[..]] {
        let a = f.run(args).1;
        let b = f.run(&[args, &["--threads", "1"]].concat()).1;
        let c = f.run(&[args, &["--threads", "3"]].concat()).1;
        assert_eq!(a, b);
        assert_eq!(a, c);
    }
}

#[test]
fn saturated_fit_reports_not_applicable() {
    let f = Fixture::new();
    let (_, json, _) = f.run(&["fit", "--data", "d.csv", "--model", "triangle.path"]);
    let v: Value = serde_json::from_str(&json).unwrap();
    assert!(v["pathfit"]["indices"]["cmin_df"].is_null());
    let (_, text, _) = f.run(&["fit", "--data", "d.csv", "--model", "triangle.path", "--format", "text"]);
    let line = text.lines().find(|l| l.trim_start().starts_with("cmin_df_liberal")).unwrap();
    assert!(line.contains("n/a"), "{line}");
}

#[test]
fn mediation_report_lists_untestable_assumptions() {
    let f = Fixture::new();
    let (_, json, _) = f.run(&["mediate", "--data", "d.csv", "--x", "X", "--m", "M", "--y", "Y"]);
    let v: Value = serde_json::from_str(&json).unwrap();
    assert!(!v["mediation"]["diagnostics"]["untestable"].as_array().unwrap().is_empty());
    let (_, text, _) = f.run(&["mediate", "--data", "d.csv", "--x", "X", "--m", "M", "--y", "Y", "--format", "text"]);
    assert!(text.contains("cannot be tested"));
}

#[test]
fn out_flag_writes_file() {
    let f = Fixture::new();
    let (code, stdout, _) = f.run(&["parse", "--model", "triangle.path", "--out", "roles.json"]);
    assert_eq!(code, 0);
    assert!(stdout.is_empty());
    let written = std::fs::read_to_string(f.path("roles.json")).unwrap();
    assert_valid(&written);
}
