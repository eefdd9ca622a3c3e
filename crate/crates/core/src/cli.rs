//! Command-line front end.
//!
//! Exit codes: 0 success, 1 analysis error, 2 usage error, 3 input error.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::data_io::{compute_moments, load_csv, CsvOptions, DataError};
use crate::inference::{
    bootstrap_ci, normal_ci, product_distribution_ci, sobel_se, sobel_test, CiMethod, InferenceError,
    DEFAULT_BOOT_REPS, DEFAULT_DRAWS, DEFAULT_LEVEL,
};
use crate::mediation::{
    causal_steps, check_assumptions, decompose_effects, fit_mediation, sample_size_advisory, MediationError,
    DEFAULT_ALPHA,
};
use crate::model_dsl::{classify_roles, parse_model, validate_against_columns, ModelError};
use crate::montecarlo::{run_study, SimulationDesign, SimulationError};
use crate::path_fit::{analyze_path_model, PathFitError};
use crate::report::{render_report, AnalysisReport, Format, InferenceBlock, MediationBlock, PathFitBlock};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ANALYSIS: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INPUT: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "pathmed", version, about = "Path analysis and single-mediator mediation analysis")]
struct Cli {
    /// Report format.
    #[arg(long, value_enum, default_value_t = FormatArg::Json, global = true)]
    format: FormatArg,
    /// Write the report to PATH instead of standard output.
    #[arg(long, value_name = "PATH", global = true)]
    out: Option<PathBuf>,
    /// Worker threads for resampling and simulation (default: all cores).
    #[arg(long, value_name = "N", global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CiArg {
    Normal,
    Bootstrap,
    Product,
    All,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Single-mediator analysis of X -> M -> Y.
    Mediate(MediateArgs),
    /// Maximum-likelihood fit of a path model with fit indices.
    Fit(FitArgs),
    /// Monte Carlo study of indirect-effect estimators and intervals.
    Simulate(SimulateArgs),
    /// Validate a model file and print variable roles.
    Parse(ParseArgs),
}

#[derive(Debug, Args)]
struct MediateArgs {
    #[arg(long, value_name = "CSV")]
    data: PathBuf,
    #[arg(long)]
    x: String,
    #[arg(long)]
    m: String,
    #[arg(long)]
    y: String,
    /// Significance level for the causal steps and the interaction check.
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    /// Interval method(s) for the indirect effect.
    #[arg(long, value_enum, default_value_t = CiArg::Normal)]
    ci: CiArg,
    /// Bootstrap replicates.
    #[arg(long, default_value_t = DEFAULT_BOOT_REPS)]
    boot_reps: usize,
    /// Product-distribution draws.
    #[arg(long, default_value_t = DEFAULT_DRAWS)]
    draws: usize,
    /// Seed; required for bootstrap and product intervals.
    #[arg(long)]
    seed: Option<u64>,
    /// Confidence level.
    #[arg(long, default_value_t = DEFAULT_LEVEL)]
    level: f64,
    /// Field delimiter of the CSV file.
    #[arg(long, default_value_t = ',')]
    delimiter: char,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[arg(long, value_name = "CSV")]
    data: PathBuf,
    #[arg(long, value_name = "PATH")]
    model: PathBuf,
    #[arg(long, default_value_t = ',')]
    delimiter: char,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long, value_name = "JSON")]
    design: PathBuf,
    /// Seed; overrides the design's seed and is required when it has none.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct ParseArgs {
    #[arg(long, value_name = "PATH")]
    model: PathBuf,
}

#[derive(Debug)]
struct CliError {
    code: i32,
    message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError { code: EXIT_USAGE, message: message.into() }
    }
    fn input(message: impl Into<String>) -> Self {
        CliError { code: EXIT_INPUT, message: message.into() }
    }
    fn analysis(message: impl Into<String>) -> Self {
        CliError { code: EXIT_ANALYSIS, message: message.into() }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::input(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::input(e.to_string())
    }
}

impl From<MediationError> for CliError {
    fn from(e: MediationError) -> Self {
        match e {
            MediationError::MissingColumn(_) | MediationError::TooFewRows(_) => CliError::input(e.to_string()),
            MediationError::NotDistinct | MediationError::InvalidAlpha(_) => CliError::usage(e.to_string()),
            MediationError::Regression { .. } => CliError::analysis(e.to_string()),
        }
    }
}

impl From<InferenceError> for CliError {
    fn from(e: InferenceError) -> Self {
        match e {
            InferenceError::Mediation(m) => m.into(),
            InferenceError::InvalidLevel(_) | InferenceError::TooFewReplicates(_) | InferenceError::TooFewDraws(_) => {
                CliError::usage(e.to_string())
            }
            _ => CliError::analysis(e.to_string()),
        }
    }
}

impl From<PathFitError> for CliError {
    fn from(e: PathFitError) -> Self {
        match e {
            PathFitError::Model(m) => m.into(),
            _ => CliError::analysis(e.to_string()),
        }
    }
}

impl From<SimulationError> for CliError {
    fn from(e: SimulationError) -> Self {
        match e {
            SimulationError::InvalidDesign(_) => CliError::input(e.to_string()),
            SimulationError::MissingSeed => CliError::usage("simulate requires --seed when the design has no seed"),
            SimulationError::Inference(i) => i.into(),
            _ => CliError::analysis(e.to_string()),
        }
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))
}

fn csv_options(delimiter: char) -> Result<CsvOptions, CliError> {
    if !delimiter.is_ascii() {
        return Err(CliError::usage(format!("delimiter must be an ASCII character, got {delimiter:?}")));
    }
    Ok(CsvOptions { delimiter: delimiter as u8, ..CsvOptions::default() })
}

/// Run the command line `args` (program name first), writing the report to
/// `out` (unless `--out` is given) and diagnostics to `err`.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{text}");
                    EXIT_USAGE
                }
            };
        }
    };

    let result = match cli.threads {
        Some(0) => Err(CliError::usage("--threads must be at least 1")),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| execute(&cli)),
            Err(e) => Err(CliError::analysis(format!("cannot start worker pool: {e}"))),
        },
        None => execute(&cli),
    };

    match result.and_then(|report| emit(&cli, &report, out)) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message);
            e.code
        }
    }
}

fn emit(cli: &Cli, report: &AnalysisReport, out: &mut dyn Write) -> Result<(), CliError> {
    let format = match cli.format {
        FormatArg::Json => Format::Json,
        FormatArg::Text => Format::Text,
    };
    let text = render_report(report, format);
    match &cli.out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display()))),
        None => out.write_all(text.as_bytes()).map_err(|e| CliError::input(format!("cannot write report: {e}"))),
    }
}

fn execute(cli: &Cli) -> Result<AnalysisReport, CliError> {
    match &cli.command {
        Command::Mediate(a) => mediate(a),
        Command::Fit(a) => fit(a),
        Command::Simulate(a) => simulate(a),
        Command::Parse(a) => parse(a),
    }
}

fn mediate(a: &MediateArgs) -> Result<AnalysisReport, CliError> {
    if !(a.alpha > 0.0 && a.alpha < 1.0) {
        return Err(CliError::usage(format!("--alpha must lie in (0, 1), got {}", a.alpha)));
    }
    if !(a.level > 0.0 && a.level < 1.0) {
        return Err(CliError::usage(format!("--level must lie in (0, 1), got {}", a.level)));
    }
    let methods: Vec<CiMethod> = match a.ci {
        CiArg::Normal => vec![CiMethod::Normal],
        CiArg::Bootstrap => vec![CiMethod::Bootstrap],
        CiArg::Product => vec![CiMethod::ProductDistribution],
        CiArg::All => CiMethod::ALL.to_vec(),
    };
    let stochastic = methods.iter().any(|m| *m != CiMethod::Normal);
    if stochastic && a.seed.is_none() {
        return Err(CliError::usage("bootstrap and product intervals require --seed"));
    }

    let data = load_csv(&a.data, &csv_options(a.delimiter)?)?;
    let fit = fit_mediation(&data, &a.x, &a.m, &a.y)?;
    let effects = decompose_effects(&fit);
    let steps = causal_steps(&fit, a.alpha)?;
    let diagnostics = check_assumptions(&fit, &data, a.alpha)?;
    let triangle = parse_model(&format!("{m} ~ {x}\n{y} ~ {x} + {m}", x = a.x, m = a.m, y = a.y))?;
    let roles = classify_roles(&triangle);
    let advisories = sample_size_advisory(&roles, fit.n);

    let point = fit.beta3.estimate * fit.beta_m.estimate;
    let mut intervals = Vec::with_capacity(methods.len());
    for method in &methods {
        let ci = match method {
            CiMethod::Normal => normal_ci(point, sobel_se(&fit), a.level)?,
            CiMethod::Bootstrap => {
                bootstrap_ci(&data, &a.x, &a.m, &a.y, a.boot_reps, a.seed.expect("checked"), a.level)?
            }
            CiMethod::ProductDistribution => product_distribution_ci(&fit, a.draws, a.seed.expect("checked"), a.level)?,
        };
        intervals.push(ci);
    }
    let sobel = sobel_test(&fit).ok();

    let mut report = AnalysisReport::new("mediate");
    report.inputs.data = Some(a.data.display().to_string());
    report.inputs.n = Some(data.n());
    report.inputs.rows_dropped = Some(data.rows_dropped);
    report.inputs.variables = vec![a.x.clone(), a.m.clone(), a.y.clone()];
    report.settings.seed = a.seed;
    report.settings.alpha = Some(a.alpha);
    report.settings.level = Some(a.level);
    report.settings.boot_reps = methods.contains(&CiMethod::Bootstrap).then_some(a.boot_reps);
    report.settings.draws = methods.contains(&CiMethod::ProductDistribution).then_some(a.draws);
    report.roles = Some(roles);
    report.mediation = Some(MediationBlock::new(&fit, effects, steps, diagnostics, advisories));
    report.inference = Some(InferenceBlock { sobel, intervals });
    Ok(report)
}

fn fit(a: &FitArgs) -> Result<AnalysisReport, CliError> {
    let spec = parse_model(&read_text(&a.model)?)?;
    let data = load_csv(&a.data, &csv_options(a.delimiter)?)?;
    validate_against_columns(&spec, &data.columns)?;
    let moments = compute_moments(&data);
    let analysis = analyze_path_model(&spec, &moments)?;
    let roles = classify_roles(&spec);
    let advisories = sample_size_advisory(&roles, data.n());

    let mut report = AnalysisReport::new("fit");
    report.inputs.data = Some(a.data.display().to_string());
    report.inputs.model = Some(a.model.display().to_string());
    report.inputs.n = Some(data.n());
    report.inputs.rows_dropped = Some(data.rows_dropped);
    report.inputs.variables = spec.variables.clone();
    report.roles = Some(roles);
    report.pathfit = Some(PathFitBlock::new(&analysis, advisories));
    Ok(report)
}

fn simulate(a: &SimulateArgs) -> Result<AnalysisReport, CliError> {
    let text = read_text(&a.design)?;
    let mut design: SimulationDesign =
        serde_json::from_str(&text).map_err(|e| CliError::input(format!("bad design {}: {e}", a.design.display())))?;
    if a.seed.is_some() {
        design.seed = a.seed;
    }
    if design.seed.is_none() {
        return Err(CliError::usage("simulate requires --seed when the design has no seed"));
    }
    let study = run_study(&design)?;

    let mut report = AnalysisReport::new("simulate");
    report.inputs.design = Some(a.design.display().to_string());
    report.inputs.n = Some(design.n);
    report.settings.seed = design.seed;
    report.settings.level = Some(design.level);
    report.settings.boot_reps = design.methods.contains(&CiMethod::Bootstrap).then_some(design.boot_reps);
    report.settings.draws = design.methods.contains(&CiMethod::ProductDistribution).then_some(design.draws);
    report.simulation = Some(study);
    Ok(report)
}

fn parse(a: &ParseArgs) -> Result<AnalysisReport, CliError> {
    let spec = parse_model(&read_text(&a.model)?)?;
    let mut report = AnalysisReport::new("parse");
    report.inputs.model = Some(a.model.display().to_string());
    report.inputs.variables = spec.variables.clone();
    report.roles = Some(classify_roles(&spec));
    Ok(report)
}
