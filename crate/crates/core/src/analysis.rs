//! Dataset-level analysis: every test at every setting pair, CHSH, the
//! chi-square summary, optional fits and coefficient scans, gathered into a
//! [`Report`].

use std::collections::BTreeMap;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitting::{fit_model, FitFamily, FitResult};
use crate::inequality::{
    chsh_statistic, optimal_coefficients, ChshAngles, CoefficientVector, CHSH_CLASSICAL_BOUND,
    TSIRELSON_BOUND,
};
use crate::io::{round_sig, Dataset};
use crate::model::{model_quad, AnalyzerSettings, ProbabilityQuad, StateKind, StateModel};
use crate::rng::Stream;
use crate::special::chi_square_sf;
use crate::statistics::{
    chi_square_statistic, covariance_at, empirical_quad, evaluate_test_with, EmpiricalQuad,
    TestResult, VarianceSource,
};

pub const TOOL_NAME: &str = "bell-lab";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// A hypothesized source: state model plus analyzer calibration offsets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub model: StateModel,
    pub alpha_offset: f64,
    pub beta_offset: f64,
}

impl ModelSpec {
    pub fn new(model: StateModel) -> Self {
        Self {
            model,
            alpha_offset: 0.0,
            beta_offset: 0.0,
        }
    }

    pub fn with_offsets(mut self, alpha_offset: f64, beta_offset: f64) -> Self {
        self.alpha_offset = alpha_offset;
        self.beta_offset = beta_offset;
        self
    }

    /// Predicted quad at nominal settings.
    pub fn quad(&self, nominal: &AnalyzerSettings) -> Result<ProbabilityQuad> {
        model_quad(&self.model, &nominal.shifted(self.alpha_offset, self.beta_offset)?)
    }

    pub fn correlation(&self, alpha: f64, beta: f64) -> Result<f64> {
        let q = self.quad(&AnalyzerSettings::new(alpha, beta)?)?;
        Ok(crate::inequality::correlation(&q))
    }

    pub fn describe(&self) -> ModelSummary {
        let (name, theta) = match self.model.kind() {
            StateKind::MaxEntangled => ("max", None),
            StateKind::NonMaxEntangled { theta } => ("nonmax", Some(round_sig(theta))),
            StateKind::Lhv => ("lhv", None),
        };
        ModelSummary {
            name: name.to_string(),
            theta,
            visibility: round_sig(self.model.visibility()),
            alpha_offset_deg: round_sig(self.alpha_offset.to_degrees()),
            beta_offset_deg: round_sig(self.beta_offset.to_degrees()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub name: String,
    pub theta: Option<f64>,
    pub visibility: f64,
    pub alpha_offset_deg: f64,
    pub beta_offset_deg: f64,
}

/// A coefficient vector with a display label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTest {
    pub label: String,
    pub c: CoefficientVector,
}

impl LabeledTest {
    pub fn new(label: impl Into<String>, c: CoefficientVector) -> Self {
        Self { label: label.into(), c }
    }
}

pub fn label_for(c: &CoefficientVector) -> &'static str {
    const NAMED: [(&str, CoefficientVector); 6] = [
        ("correlation", CoefficientVector::CORRELATION),
        ("normalization", CoefficientVector::NORMALIZATION),
        ("same_imbalance", CoefficientVector::SAME_IMBALANCE),
        ("cross_imbalance", CoefficientVector::CROSS_IMBALANCE),
        ("marginal_a", CoefficientVector::MARGINAL_A),
        ("marginal_b", CoefficientVector::MARGINAL_B),
    ];
    NAMED
        .iter()
        .find(|(_, v)| v == c)
        .map(|(name, _)| *name)
        .unwrap_or("custom")
}

pub fn builtin_tests() -> Vec<LabeledTest> {
    crate::inequality::canonical_tests()
        .into_iter()
        .map(|c| LabeledTest::new(label_for(&c), c))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    pub model: ModelSpec,
    pub tests: Vec<LabeledTest>,
    pub z_threshold: f64,
    pub variance: VarianceSource,
    pub chsh_angles: ChshAngles,
    pub fit: Option<FitFamily>,
}

impl AnalysisConfig {
    pub fn new(model: ModelSpec) -> Self {
        Self {
            model,
            tests: builtin_tests(),
            z_threshold: 5.0,
            variance: VarianceSource::Predicted,
            chsh_angles: ChshAngles::standard(),
            fit: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub meta: ReportMeta,
    pub per_pair: Vec<PairReport>,
    pub aggregate: Vec<AggregateTest>,
    pub chsh: ChshReport,
    pub chi_square: ChiSquareReport,
    pub fit: Option<FitSummary>,
    pub scan: ScanSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub tool: String,
    pub version: String,
    pub source: Option<String>,
    pub dataset: BTreeMap<String, String>,
    pub model: ModelSummary,
    pub variance: VarianceSource,
    pub z_threshold: f64,
    pub n_pairs: usize,
    pub n_failed: usize,
    pub rejected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub alpha_deg: f64,
    pub beta_deg: f64,
    pub n: u64,
    pub tests: Vec<TestEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestEntry {
    pub label: String,
    pub c: [f64; 4],
    pub observed: f64,
    pub predicted: f64,
    pub sigma: f64,
    pub z: f64,
    pub compensation_ratio: f64,
    pub degenerate: bool,
    pub pass: bool,
}

impl TestEntry {
    fn from_result(label: &str, r: &TestResult, z_threshold: f64) -> Self {
        Self {
            label: label.to_string(),
            c: r.c.as_array().map(round_sig),
            observed: round_sig(r.observed),
            predicted: round_sig(r.predicted),
            sigma: round_sig(r.sigma),
            z: round_sig(r.z),
            compensation_ratio: round_sig(r.compensation_ratio),
            degenerate: r.degenerate,
            pass: r.degenerate || r.z.abs() < z_threshold,
        }
    }
}

/// One test pooled over all setting pairs: `sum z^2` is chi-square with one
/// degree of freedom per non-degenerate pair under the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateTest {
    pub label: String,
    pub c: [f64; 4],
    pub n_pairs: usize,
    pub sum_z_squared: f64,
    pub p_value: f64,
    pub max_abs_z: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChshReport {
    /// `a, a', b, b'` in degrees.
    pub angles: [f64; 4],
    /// `data` when all four pairs are in the dataset, else `model`.
    pub source: String,
    #[serde(rename = "S")]
    pub s: f64,
    pub sigma: Option<f64>,
    #[serde(rename = "S_model")]
    pub s_model: f64,
    pub classical_bound: f64,
    pub tsirelson: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareReport {
    /// `None` when the model forbids an observed outcome.
    pub chi2: Option<f64>,
    pub dof: usize,
    pub p_value: f64,
    pub impossible_outcome: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitParametersSummary {
    pub theta: f64,
    pub visibility: f64,
    pub alpha_offset_deg: f64,
    pub beta_offset_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub parameters: FitParametersSummary,
    pub free: Vec<String>,
    pub chi2: f64,
    pub dof: usize,
    pub p_value: f64,
    pub converged: bool,
    pub evaluations: usize,
    pub uninformative: bool,
}

impl From<&FitResult> for FitSummary {
    fn from(f: &FitResult) -> Self {
        Self {
            parameters: FitParametersSummary {
                theta: round_sig(f.parameters.theta),
                visibility: round_sig(f.parameters.visibility),
                alpha_offset_deg: round_sig(f.parameters.alpha_offset.to_degrees()),
                beta_offset_deg: round_sig(f.parameters.beta_offset.to_degrees()),
            },
            free: f.free.clone(),
            chi2: round_sig(f.chi2),
            dof: f.dof,
            p_value: round_sig(f.p_value),
            converged: f.converged,
            evaluations: f.evaluations,
            uninformative: f.uninformative,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScanSummary {
    /// Distinct coefficient vectors evaluated.
    pub n_tested: usize,
    /// Non-degenerate (vector, pair) evaluations.
    pub n_evaluations: usize,
    pub max_abs_z: f64,
    pub argmax_c: Option<[f64; 4]>,
    /// `[alpha_deg, beta_deg]` of the pair where `max_abs_z` occurred.
    pub argmax_pair: Option<[f64; 2]>,
}

struct PairData {
    settings: AnalyzerSettings,
    empirical: EmpiricalQuad,
    predicted: ProbabilityQuad,
}

fn pair_data(dataset: &Dataset, model: &ModelSpec) -> Result<Vec<PairData>> {
    if dataset.records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    dataset
        .records
        .par_iter()
        .map(|r| {
            Ok(PairData {
                settings: r.settings,
                empirical: empirical_quad(r)?,
                predicted: model.quad(&r.settings)?,
            })
        })
        .collect()
}

/// Runs the configured tests against every setting pair.
pub fn analyze(dataset: &Dataset, config: &AnalysisConfig) -> Result<Report> {
    let pairs = pair_data(dataset, &config.model)?;
    let results: Vec<Vec<TestResult>> = pairs
        .par_iter()
        .map(|p| {
            config
                .tests
                .iter()
                .map(|t| evaluate_test_with(&t.c, &p.empirical, &p.predicted, config.variance))
                .collect()
        })
        .collect();

    let per_pair: Vec<PairReport> = pairs
        .iter()
        .zip(&results)
        .map(|(p, rs)| PairReport {
            alpha_deg: round_sig(p.settings.alpha_deg()),
            beta_deg: round_sig(p.settings.beta_deg()),
            n: p.empirical.n,
            tests: config
                .tests
                .iter()
                .zip(rs)
                .map(|(t, r)| TestEntry::from_result(&t.label, r, config.z_threshold))
                .collect(),
        })
        .collect();

    let aggregate = config
        .tests
        .iter()
        .enumerate()
        .map(|(k, t)| aggregate_test(t, results.iter().map(|rs| &rs[k]), config.z_threshold))
        .collect();

    let mut scan = ScanAccumulator::default();
    for (p, rs) in pairs.iter().zip(&results) {
        for r in rs {
            scan.observe(r, &p.settings);
        }
    }
    let scan = scan.finish(config.tests.len());

    let n_failed = per_pair
        .iter()
        .flat_map(|p| &p.tests)
        .filter(|t| !t.pass)
        .count();

    let fit = match &config.fit {
        Some(family) => Some(FitSummary::from(&fit_model(&dataset.records, family)?)),
        None => None,
    };

    Ok(Report {
        meta: ReportMeta {
            tool: TOOL_NAME.to_string(),
            version: TOOL_VERSION.to_string(),
            source: dataset.source.clone(),
            dataset: dataset.metadata.clone(),
            model: config.model.describe(),
            variance: config.variance,
            z_threshold: config.z_threshold,
            n_pairs: pairs.len(),
            n_failed,
            rejected: n_failed > 0,
        },
        per_pair,
        aggregate,
        chsh: chsh_report(dataset, &config.model, &config.chsh_angles)?,
        chi_square: chi_square_report(&pairs, dataset)?,
        fit,
        scan,
    })
}

fn aggregate_test<'a>(
    test: &LabeledTest,
    results: impl Iterator<Item = &'a TestResult>,
    z_threshold: f64,
) -> AggregateTest {
    let mut n_pairs = 0;
    let mut sum = 0.0;
    let mut max_abs = 0.0f64;
    for r in results.filter(|r| !r.degenerate) {
        n_pairs += 1;
        sum += r.z * r.z;
        max_abs = max_abs.max(r.z.abs());
    }
    AggregateTest {
        label: test.label.clone(),
        c: test.c.as_array().map(round_sig),
        n_pairs,
        sum_z_squared: round_sig(sum),
        p_value: round_sig(chi_square_sf(sum, n_pairs)),
        max_abs_z: round_sig(max_abs),
        pass: max_abs < z_threshold,
    }
}

#[derive(Default)]
struct ScanAccumulator {
    n_evaluations: usize,
    best: Option<(f64, [f64; 4], [f64; 2])>,
}

impl ScanAccumulator {
    fn observe(&mut self, r: &TestResult, settings: &AnalyzerSettings) {
        if r.degenerate {
            return;
        }
        self.n_evaluations += 1;
        let z = r.z.abs();
        if self.best.is_none_or(|(b, _, _)| z > b) {
            self.best = Some((z, r.c.as_array(), [settings.alpha_deg(), settings.beta_deg()]));
        }
    }

    fn finish(self, n_tested: usize) -> ScanSummary {
        ScanSummary {
            n_tested,
            n_evaluations: self.n_evaluations,
            max_abs_z: self.best.map_or(0.0, |b| round_sig(b.0)),
            argmax_c: self.best.map(|b| b.1.map(round_sig)),
            argmax_pair: self.best.map(|b| b.2.map(round_sig)),
        }
    }
}

fn chi_square_report(pairs: &[PairData], dataset: &Dataset) -> Result<ChiSquareReport> {
    let data: Vec<_> = dataset
        .records
        .iter()
        .zip(pairs)
        .map(|(r, p)| (*r, p.predicted))
        .collect();
    match chi_square_statistic(&data, 0) {
        Ok(c) => Ok(ChiSquareReport {
            chi2: Some(round_sig(c.chi2)),
            dof: c.dof,
            p_value: round_sig(c.p_value),
            impossible_outcome: None,
        }),
        Err(e @ Error::ImpossibleOutcome { .. }) => Ok(ChiSquareReport {
            chi2: None,
            dof: 3 * data.len(),
            p_value: 0.0,
            impossible_outcome: Some(e.to_string()),
        }),
        Err(e) => Err(e),
    }
}

fn find_record(dataset: &Dataset, alpha: f64, beta: f64) -> Option<&crate::CountsRecord> {
    let close = |x: f64, y: f64| (x.to_degrees() - y.to_degrees()).abs() < 1e-9;
    dataset
        .records
        .iter()
        .find(|r| close(r.settings.alpha, alpha) && close(r.settings.beta, beta))
}

/// CHSH from the data when the dataset holds all four setting pairs, else
/// from the model alone.
pub fn chsh_report(dataset: &Dataset, model: &ModelSpec, angles: &ChshAngles) -> Result<ChshReport> {
    let s_model = chsh_from_model(model, angles)?;
    let records: Option<Vec<_>> = angles
        .pairs()
        .iter()
        .map(|&(a, b)| find_record(dataset, a, b))
        .collect();
    let (source, s, sigma) = match records {
        Some(records) => {
            let (s, sigma) = chsh_from_records(&records)?;
            ("data", s, Some(round_sig(sigma)))
        }
        None => ("model", s_model, None),
    };
    Ok(ChshReport {
        angles: angles.degrees().map(round_sig),
        source: source.to_string(),
        s: round_sig(s),
        sigma,
        s_model: round_sig(s_model),
        classical_bound: CHSH_CLASSICAL_BOUND,
        tsirelson: TSIRELSON_BOUND,
    })
}

pub fn chsh_from_model(model: &ModelSpec, angles: &ChshAngles) -> Result<f64> {
    // Validate all four pairs first so the closure below cannot fail.
    for (a, b) in angles.pairs() {
        model.correlation(a, b)?;
    }
    Ok(chsh_statistic(
        |a, b| model.correlation(a, b).expect("validated above"),
        angles,
    ))
}

/// `S` and its standard error from records ordered `(a,b), (a,b'), (a',b),
/// (a',b')`. Each empirical `E` has variance `(1 - E^2) / n`.
pub fn chsh_from_records(records: &[&crate::CountsRecord]) -> Result<(f64, f64)> {
    let mut s = 0.0;
    let mut var = 0.0;
    for (k, r) in records.iter().enumerate() {
        let q = empirical_quad(r)?;
        let e = crate::inequality::correlation(&q.as_quad());
        s += crate::inequality::CHSH_SIGNS[k] * e;
        var += (1.0 - e * e).max(0.0) / q.n as f64;
    }
    Ok((s, var.sqrt()))
}

/// Options for [`scan`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanOptions {
    pub random_c: usize,
    pub seed: u64,
    pub include_optimal: bool,
}

/// Random unit coefficient vectors, uniform on the sphere.
pub fn random_unit_vectors(count: usize, seed: u64) -> Vec<CoefficientVector> {
    let mut stream = Stream::new(seed, u64::MAX);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let v: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(stream.rng()));
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            out.push(CoefficientVector::from_array(v.map(|x| x / norm)).expect("finite unit vector"));
        }
    }
    out
}

/// [`analyze`] plus an exploration of the test family: random unit vectors
/// at every pair and, optionally, the most significant vector per pair. The
/// per-pair listing gains the optimal vector; random vectors only enter the
/// scan summary.
pub fn scan(dataset: &Dataset, config: &AnalysisConfig, options: &ScanOptions) -> Result<Report> {
    let mut report = analyze(dataset, config)?;
    let pairs = pair_data(dataset, &config.model)?;
    let random = random_unit_vectors(options.random_c, options.seed);

    let mut acc = ScanAccumulator::default();
    for (p, entry) in pairs.iter().zip(report.per_pair.iter_mut()) {
        for t in &config.tests {
            acc.observe(&evaluate_test_with(&t.c, &p.empirical, &p.predicted, config.variance), &p.settings);
        }
        for c in &random {
            acc.observe(&evaluate_test_with(c, &p.empirical, &p.predicted, config.variance), &p.settings);
        }
        if options.include_optimal {
            let model = p.predicted.as_array();
            let delta: [f64; 4] = std::array::from_fn(|i| p.empirical.p[i] - model[i]);
            let cov = match config.variance {
                VarianceSource::Predicted => covariance_at(&model, p.empirical.n),
                VarianceSource::Empirical => covariance_at(&p.empirical.p, p.empirical.n),
            };
            let opt = optimal_coefficients(&delta, &cov)?;
            let r = evaluate_test_with(&opt.c, &p.empirical, &p.predicted, config.variance);
            acc.observe(&r, &p.settings);
            let mut e = TestEntry::from_result("optimal", &r, config.z_threshold);
            e.degenerate |= opt.degenerate;
            entry.tests.push(e);
        }
    }
    let n_tested = config.tests.len() + random.len() + usize::from(options.include_optimal) * pairs.len();
    report.scan = acc.finish(n_tested);
    report.meta.n_failed = report
        .per_pair
        .iter()
        .flat_map(|p| &p.tests)
        .filter(|t| !t.pass)
        .count();
    report.meta.rejected = report.meta.n_failed > 0;
    Ok(report)
}

/// Standalone CHSH output of the `chsh` command.
pub fn chsh_only(dataset: Option<&Dataset>, model: &ModelSpec, angles: &ChshAngles) -> Result<ChshReport> {
    match dataset {
        Some(d) => chsh_report(d, model, angles),
        None => chsh_report(&Dataset::default(), model, angles),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub meta: FitMeta,
    pub fit: FitSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMeta {
    pub tool: String,
    pub version: String,
    pub source: Option<String>,
    pub n_pairs: usize,
}

pub fn fit_report(dataset: &Dataset, family: &FitFamily) -> Result<FitReport> {
    let fit = fit_model(&dataset.records, family)?;
    Ok(FitReport {
        meta: FitMeta {
            tool: TOOL_NAME.to_string(),
            version: TOOL_VERSION.to_string(),
            source: dataset.source.clone(),
            n_pairs: dataset.records.len(),
        },
        fit: FitSummary::from(&fit),
    })
}
