//! Command-line interface. `main.rs` only forwards to [`main`].

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::analysis::{
    analyze, chsh_only, fit_report, label_for, scan, AnalysisConfig, LabeledTest, ModelSpec,
    ScanOptions, TOOL_NAME, TOOL_VERSION,
};
use crate::error::{Error, Result};
use crate::fitting::FitFamily;
use crate::inequality::{ChshAngles, CoefficientVector};
use crate::io::{emit_curve, emit_json, load_dataset, write_counts, Dataset, DuplicatePolicy};
use crate::model::{AnalyzerSettings, StateKind, StateModel};
use crate::simulator::{simulate, ExperimentPlan, NoiseConfig};
use crate::statistics::VarianceSource;

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_DATA: u8 = 2;
pub const EXIT_REJECTED: u8 = 3;

/// Environment variable capping analysis parallelism.
pub const THREADS_ENV: &str = "BELL_LAB_THREADS";

#[derive(Debug, Parser)]
#[command(name = "bell-lab", version, about = "EPR-Bohm coincidence-count simulation and linear-combination tests")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a counts file from a model.
    Simulate(SimulateArgs),
    /// Test a counts file against a model.
    Analyze(AnalyzeArgs),
    /// Explore random and optimal coefficient vectors.
    Scan(ScanArgs),
    /// CHSH value from data or from a model.
    Chsh(ChshArgs),
    /// Fit the entangled-state family to a counts file.
    Fit(FitArgs),
    /// Tabulate E_c along the relative analyzer angle.
    Curve(CurveArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModelName {
    Max,
    Nonmax,
    Lhv,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long, value_enum, default_value = "max")]
    pub model: ModelName,
    /// Entanglement angle in radians (nonmax only).
    #[arg(long, default_value_t = std::f64::consts::FRAC_PI_4)]
    pub theta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub visibility: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub alpha_offset_deg: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub beta_offset_deg: f64,
}

impl ModelArgs {
    pub fn state_model(&self) -> Result<StateModel> {
        let kind = match self.model {
            ModelName::Max => StateKind::MaxEntangled,
            ModelName::Nonmax => StateKind::NonMaxEntangled { theta: self.theta },
            ModelName::Lhv => StateKind::Lhv,
        };
        StateModel::new(kind, self.visibility)
    }

    pub fn spec(&self) -> Result<ModelSpec> {
        Ok(ModelSpec::new(self.state_model()?)
            .with_offsets(self.alpha_offset_deg.to_radians(), self.beta_offset_deg.to_radians()))
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub anomaly_eps1: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub anomaly_eps2: f64,
    /// Settings file (alpha_deg,beta_deg columns), `builtin:chsh` or `builtin:grid16`.
    #[arg(long, default_value = "builtin:chsh")]
    pub settings: String,
    #[arg(long, default_value_t = 100_000)]
    pub shots: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long, default_value = "-")]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum VarianceArg {
    Predicted,
    Empirical,
}

#[derive(Debug, Args)]
pub struct AnalysisArgs {
    /// Counts CSV, `-` for standard input.
    pub counts: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    /// JSON array of 4-vectors, or `builtin`.
    #[arg(long, default_value = "builtin")]
    pub tests: String,
    #[arg(long, default_value_t = 5.0)]
    pub z_threshold: f64,
    #[arg(long, value_enum, default_value = "predicted")]
    pub variance: VarianceArg,
    /// CHSH angles a,a',b,b' in degrees.
    #[arg(long, allow_hyphen_values = true)]
    pub angles: Option<String>,
    /// Reject duplicate setting pairs instead of merging them.
    #[arg(long)]
    pub strict: bool,
    /// Exit with code 3 when any test fails.
    #[arg(long)]
    pub fail_on_reject: bool,
    #[arg(short, long, default_value = "-")]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub common: AnalysisArgs,
    /// Also fit the family with these free parameters (theta,visibility,offsets).
    #[arg(long)]
    pub fit: Option<String>,
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    #[command(flatten)]
    pub common: AnalysisArgs,
    #[arg(long, default_value_t = 1000)]
    pub random_c: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub include_optimal: bool,
}

#[derive(Debug, Args)]
pub struct ChshArgs {
    /// Counts CSV; without it the model alone is evaluated.
    pub counts: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    /// a,a',b,b' in degrees.
    #[arg(long, default_value = "0,45,22.5,67.5", allow_hyphen_values = true)]
    pub angles: String,
    #[arg(short, long, default_value = "-")]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    pub counts: PathBuf,
    #[arg(long, default_value = "theta,visibility,offsets")]
    pub free: String,
    #[arg(long)]
    pub strict: bool,
    #[arg(short, long, default_value = "-")]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct CurveArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value = "1,-1,-1,1", allow_hyphen_values = true)]
    pub c: String,
    #[arg(long, default_value_t = 1.0)]
    pub step_deg: f64,
    #[arg(short, long, default_value = "-")]
    pub output: PathBuf,
}

/// Parses arguments, runs the command and maps the outcome to an exit code.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { EXIT_USAGE } else { EXIT_OK });
        }
    };
    configure_threads();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn configure_threads() {
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

pub fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_)
        | Error::InvalidVisibility(_)
        | Error::InvalidTheta(_)
        | Error::InvalidCoefficients(_)
        | Error::InvalidFitFamily(_)
        | Error::InvalidPlan(_)
        | Error::NonFiniteAngle { .. } => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

pub fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Simulate(a) => run_simulate(&a),
        Command::Analyze(a) => run_analyze(&a),
        Command::Scan(a) => run_scan(&a),
        Command::Chsh(a) => run_chsh(&a),
        Command::Fit(a) => run_fit(&a),
        Command::Curve(a) => run_curve(&a),
    }
}

pub fn parse_list(s: &str, expected: usize, what: &str) -> Result<Vec<f64>> {
    let values = s
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| Error::InvalidArgument(format!("{what}: cannot parse '{s}'")))?;
    if values.len() != expected {
        return Err(Error::InvalidArgument(format!(
            "{what}: expected {expected} comma-separated values, got {}",
            values.len()
        )));
    }
    Ok(values)
}

fn parse_angles(s: &str) -> Result<ChshAngles> {
    let v = parse_list(s, 4, "--angles")?;
    ChshAngles::from_degrees(v[0], v[1], v[2], v[3])
}

fn builtin_settings(name: &str) -> Option<Vec<(f64, f64)>> {
    match name {
        "chsh" => Some(vec![(0.0, 22.5), (0.0, 67.5), (45.0, 22.5), (45.0, 67.5)]),
        "grid16" => {
            let angles = [0.0, 22.5, 45.0, 67.5];
            Some(angles.iter().flat_map(|&a| angles.iter().map(move |&b| (a, b))).collect())
        }
        _ => None,
    }
}

/// Setting pairs from `builtin:<name>` or a CSV whose first two columns are
/// `alpha_deg,beta_deg`.
pub fn load_settings(spec: &str) -> Result<Vec<AnalyzerSettings>> {
    let degrees = if let Some(name) = spec.strip_prefix("builtin:") {
        builtin_settings(name).ok_or_else(|| Error::InvalidArgument(format!("unknown builtin settings '{name}'")))?
    } else {
        let text = std::fs::read_to_string(spec)?;
        let mut out = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with("alpha_deg") {
                continue;
            }
            let mut fields = line.split(',').map(str::trim);
            let mut next = || -> Result<f64> {
                fields
                    .next()
                    .and_then(|f| f.parse::<f64>().ok())
                    .ok_or_else(|| Error::Parse {
                        line: i + 1,
                        message: format!("expected alpha_deg,beta_deg in '{line}'"),
                    })
            };
            out.push((next()?, next()?));
        }
        out
    };
    if degrees.is_empty() {
        return Err(Error::InvalidArgument(format!("no setting pairs in '{spec}'")));
    }
    degrees
        .into_iter()
        .map(|(a, b)| AnalyzerSettings::from_degrees(a, b))
        .collect()
}

fn run_simulate(a: &SimulateArgs) -> Result<u8> {
    let model = a.model.state_model()?;
    let noise = NoiseConfig {
        visibility: 1.0,
        alpha_offset: a.model.alpha_offset_deg.to_radians(),
        beta_offset: a.model.beta_offset_deg.to_radians(),
        anomaly_eps1: a.anomaly_eps1,
        anomaly_eps2: a.anomaly_eps2,
    };
    let plan = ExperimentPlan {
        setting_pairs: load_settings(&a.settings)?,
        shots_per_pair: a.shots,
        model,
        noise,
        seed: a.seed,
    };
    let sim = simulate(&plan)?;

    let mut dataset = Dataset::new(sim.records());
    let spec = a.model.spec()?.describe();
    let meta = &mut dataset.metadata;
    meta.insert("tool".into(), format!("{TOOL_NAME} {TOOL_VERSION}"));
    meta.insert("seed".into(), a.seed.to_string());
    meta.insert("shots".into(), a.shots.to_string());
    meta.insert("model".into(), spec.name);
    if let Some(theta) = spec.theta {
        meta.insert("theta".into(), theta.to_string());
    }
    meta.insert("visibility".into(), spec.visibility.to_string());
    meta.insert("alpha_offset_deg".into(), spec.alpha_offset_deg.to_string());
    meta.insert("beta_offset_deg".into(), spec.beta_offset_deg.to_string());
    meta.insert("anomaly_eps1".into(), a.anomaly_eps1.to_string());
    meta.insert("anomaly_eps2".into(), a.anomaly_eps2.to_string());
    let applied = |f: fn(&crate::simulator::SimulatedPair) -> f64| {
        sim.pairs.iter().map(|p| crate::io::format_sig(f(p))).collect::<Vec<_>>().join(";")
    };
    meta.insert("applied_eps1".into(), applied(|p| p.applied_eps1));
    meta.insert("applied_eps2".into(), applied(|p| p.applied_eps2));

    write_counts(&dataset, &a.output)?;
    Ok(EXIT_OK)
}

/// Coefficient vectors from `builtin` or a JSON file holding an array of
/// 4-element arrays.
pub fn load_tests(spec: &str) -> Result<Vec<LabeledTest>> {
    if spec == "builtin" {
        return Ok(crate::analysis::builtin_tests());
    }
    let text = std::fs::read_to_string(spec)?;
    let raw: Vec<[f64; 4]> = serde_json::from_str(&text)?;
    raw.into_iter()
        .map(|c| {
            let c = CoefficientVector::from_array(c)?;
            Ok(LabeledTest::new(label_for(&c), c))
        })
        .collect()
}

fn analysis_setup(a: &AnalysisArgs) -> Result<(Dataset, AnalysisConfig)> {
    if a.z_threshold.is_nan() || a.z_threshold <= 0.0 {
        return Err(Error::InvalidArgument(format!("--z-threshold must be positive, got {}", a.z_threshold)));
    }
    let mut config = AnalysisConfig::new(a.model.spec()?);
    config.tests = load_tests(&a.tests)?;
    config.z_threshold = a.z_threshold;
    config.variance = match a.variance {
        VarianceArg::Predicted => VarianceSource::Predicted,
        VarianceArg::Empirical => VarianceSource::Empirical,
    };
    if let Some(angles) = &a.angles {
        config.chsh_angles = parse_angles(angles)?;
    }
    let dataset = load_dataset(&a.counts, policy(a.strict))?;
    Ok((dataset, config))
}

fn policy(strict: bool) -> DuplicatePolicy {
    if strict {
        DuplicatePolicy::Strict
    } else {
        DuplicatePolicy::Merge
    }
}

fn verdict(rejected: bool, fail_on_reject: bool) -> u8 {
    if rejected && fail_on_reject {
        EXIT_REJECTED
    } else {
        EXIT_OK
    }
}

fn run_analyze(a: &AnalyzeArgs) -> Result<u8> {
    let (dataset, mut config) = analysis_setup(&a.common)?;
    if let Some(free) = &a.fit {
        config.fit = Some(FitFamily::parse_free(free)?);
    }
    let report = analyze(&dataset, &config)?;
    emit_json(&report, &a.common.output)?;
    Ok(verdict(report.meta.rejected, a.common.fail_on_reject))
}

fn run_scan(a: &ScanArgs) -> Result<u8> {
    let (dataset, config) = analysis_setup(&a.common)?;
    let options = ScanOptions {
        random_c: a.random_c,
        seed: a.seed,
        include_optimal: a.include_optimal,
    };
    let report = scan(&dataset, &config, &options)?;
    emit_json(&report, &a.common.output)?;
    Ok(verdict(report.meta.rejected, a.common.fail_on_reject))
}

fn run_chsh(a: &ChshArgs) -> Result<u8> {
    let angles = parse_angles(&a.angles)?;
    let dataset = a
        .counts
        .as_ref()
        .map(|p| load_dataset(p, DuplicatePolicy::Merge))
        .transpose()?;
    let report = chsh_only(dataset.as_ref(), &a.model.spec()?, &angles)?;
    emit_json(&report, &a.output)?;
    Ok(EXIT_OK)
}

fn run_fit(a: &FitArgs) -> Result<u8> {
    let family = FitFamily::parse_free(&a.free)?;
    let dataset = load_dataset(&a.counts, policy(a.strict))?;
    emit_json(&fit_report(&dataset, &family)?, &a.output)?;
    Ok(EXIT_OK)
}

fn run_curve(a: &CurveArgs) -> Result<u8> {
    let c = parse_list(&a.c, 4, "--c")?;
    let c = CoefficientVector::from_array([c[0], c[1], c[2], c[3]])?;
    emit_curve(&a.model.spec()?, &c, a.step_deg.to_radians(), &a.output)?;
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_parses() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn list_parsing() {
        assert_eq!(parse_list("1,-1,-1,1", 4, "c").unwrap(), vec![1.0, -1.0, -1.0, 1.0]);
        assert!(parse_list("1,2,3", 4, "c").is_err());
        assert!(parse_list("1,x,3,4", 4, "c").is_err());
    }

    #[test]
    fn builtin_setting_sets() {
        assert_eq!(load_settings("builtin:chsh").unwrap().len(), 4);
        assert_eq!(load_settings("builtin:grid16").unwrap().len(), 16);
        assert!(load_settings("builtin:nope").is_err());
    }

    #[test]
    fn usage_errors_map_to_exit_1() {
        assert_eq!(exit_code_for(&Error::InvalidVisibility(2.0)), EXIT_USAGE);
        assert_eq!(exit_code_for(&Error::EmptyDataset), EXIT_DATA);
        assert_eq!(
            exit_code_for(&Error::Parse {
                line: 2,
                message: String::new()
            }),
            EXIT_DATA
        );
    }
}
