//! Count files, curve files and JSON output.
//!
//! Counts CSV:
//!
//! ```text
//! # seed=42
//! alpha_deg,beta_deg,n_pp,n_pm,n_mp,n_mm
//! 0,22.5,42627,7373,7332,42668
//! ```
//!
//! Lines starting with `#` before the header carry `key=value` metadata.
//! Angles are decimal degrees, counts non-negative integers.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::inequality::{linear_combination, CoefficientVector};
use crate::model::AnalyzerSettings;
use crate::simulator::CountsRecord;

pub const COUNTS_HEADER: &str = "alpha_deg,beta_deg,n_pp,n_pm,n_mp,n_mm";
pub const CURVE_HEADER: &str = "delta_rad,value";
/// Significant digits of floating-point values in reports and curves.
pub const SIGNIFICANT_DIGITS: usize = 12;

/// How repeated `(alpha, beta)` rows are handled on load.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DuplicatePolicy {
    /// Sum the counts into the first occurrence.
    #[default]
    Merge,
    /// Reject the file.
    Strict,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub records: Vec<CountsRecord>,
    pub metadata: BTreeMap<String, String>,
    /// Where the data came from; not written back out.
    pub source: Option<String>,
}

impl Dataset {
    pub fn new(records: Vec<CountsRecord>) -> Self {
        Self {
            records,
            metadata: BTreeMap::new(),
            source: None,
        }
    }
}

/// Loads a counts file; `-` reads standard input.
pub fn load_dataset(path: impl AsRef<Path>, policy: DuplicatePolicy) -> Result<Dataset> {
    let path = path.as_ref();
    let text = if path.as_os_str() == "-" {
        let mut s = String::new();
        io::stdin().read_to_string(&mut s)?;
        s
    } else {
        fs::read_to_string(path)?
    };
    let mut dataset = parse_counts(&text, policy)?;
    dataset.source = Some(path.display().to_string());
    Ok(dataset)
}

pub fn parse_counts(text: &str, policy: DuplicatePolicy) -> Result<Dataset> {
    let mut dataset = Dataset::default();
    let mut seen_header = false;
    // Key: exact degree values as written in the file.
    let mut index: BTreeMap<(u64, u64), usize> = BTreeMap::new();

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim_end_matches('\r').trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if !seen_header {
                if let Some((k, v)) = comment.split_once('=') {
                    dataset.metadata.insert(k.trim().to_string(), v.trim().to_string());
                }
            }
            continue;
        }
        if !seen_header {
            let header: Vec<&str> = line.split(',').map(str::trim).collect();
            if header.join(",") != COUNTS_HEADER {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected header '{COUNTS_HEADER}', found '{line}'"),
                });
            }
            seen_header = true;
            continue;
        }

        let (alpha_deg, beta_deg, counts) = parse_row(line, line_no)?;
        let key = (alpha_deg.to_bits(), beta_deg.to_bits());
        if let Some(&existing) = index.get(&key) {
            match policy {
                DuplicatePolicy::Strict => {
                    return Err(Error::DuplicateSetting {
                        line: line_no,
                        alpha_deg,
                        beta_deg,
                    })
                }
                DuplicatePolicy::Merge => {
                    let rec: &mut CountsRecord = &mut dataset.records[existing];
                    for (total, add) in rec.counts.iter_mut().zip(counts) {
                        *total = total.checked_add(add).ok_or_else(|| Error::Parse {
                            line: line_no,
                            message: "count overflow while merging duplicates".into(),
                        })?;
                    }
                }
            }
            continue;
        }
        let settings = AnalyzerSettings::from_degrees(alpha_deg, beta_deg).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        index.insert(key, dataset.records.len());
        dataset.records.push(CountsRecord { settings, counts });
    }

    if !seen_header {
        return Err(Error::Parse {
            line: 1,
            message: "missing header (empty file?)".into(),
        });
    }
    if dataset.records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(dataset)
}

fn parse_row(line: &str, line_no: usize) -> Result<(f64, f64, [u64; 4])> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    let err = |message: String| Error::Parse { line: line_no, message };
    if fields.len() != 6 {
        return Err(err(format!("expected 6 fields, found {}", fields.len())));
    }
    let angle = |s: &str, name: &str| -> Result<f64> {
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(err(format!("{name}: '{s}' is not a finite number"))),
        }
    };
    let alpha = angle(fields[0], "alpha_deg")?;
    let beta = angle(fields[1], "beta_deg")?;
    let names = ["n_pp", "n_pm", "n_mp", "n_mm"];
    let mut counts = [0u64; 4];
    for k in 0..4 {
        let s = fields[k + 2];
        counts[k] = match s.parse::<u64>() {
            Ok(v) => v,
            Err(_) if s.parse::<i64>().is_ok_and(|v| v < 0) => {
                return Err(err(format!("{}: negative count {s}", names[k])))
            }
            Err(_) => return Err(err(format!("{}: '{s}' is not a non-negative integer", names[k]))),
        };
    }
    Ok((alpha, beta, counts))
}

/// Degrees with at most ten decimals and no trailing zeros, so that a
/// written file parses and re-writes to the same bytes.
pub fn format_degrees(deg: f64) -> String {
    let s = format!("{deg:.10}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    match s {
        "-0" | "" => "0".to_string(),
        other => other.to_string(),
    }
}

pub fn format_counts(dataset: &Dataset) -> String {
    let mut out = String::new();
    for (k, v) in &dataset.metadata {
        out.push_str(&format!("# {k}={v}\n"));
    }
    out.push_str(COUNTS_HEADER);
    out.push('\n');
    for r in &dataset.records {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            format_degrees(r.settings.alpha_deg()),
            format_degrees(r.settings.beta_deg()),
            r.counts[0],
            r.counts[1],
            r.counts[2],
            r.counts[3]
        ));
    }
    out
}

/// Writes text to `path`, or to standard output for `-`.
pub fn write_output(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    if path.as_os_str() == "-" {
        let mut out = io::stdout().lock();
        out.write_all(text.as_bytes())?;
        out.flush()?;
    } else {
        fs::write(path, text)?;
    }
    Ok(())
}

pub fn write_counts(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    write_output(path, &format_counts(dataset))
}

/// Rounds to [`SIGNIFICANT_DIGITS`] significant digits.
pub fn round_sig(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x)
        .parse()
        .unwrap_or(x)
}

pub fn format_sig(x: f64) -> String {
    format!("{}", round_sig(x))
}

/// Pretty JSON with a trailing newline. Struct fields keep declaration order.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn emit_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    write_output(path, &to_json(value)?)
}

/// `E_c` of a model along the relative angle, sampled from 0 to pi inclusive.
pub fn curve_rows<F>(model_quad: F, c: &CoefficientVector, step: f64) -> Result<Vec<(f64, f64)>>
where
    F: Fn(&AnalyzerSettings) -> Result<crate::model::ProbabilityQuad>,
{
    if !step.is_finite() || step <= 0.0 {
        return Err(Error::InvalidArgument(format!("step must be positive, got {step}")));
    }
    let pi = std::f64::consts::PI;
    let n = (pi / step + 1e-9).floor() as usize;
    let mut deltas: Vec<f64> = (0..=n).map(|k| k as f64 * step).collect();
    if let Some(last) = deltas.last_mut() {
        if (pi - *last).abs() <= 1e-9 * step {
            *last = pi;
        } else {
            deltas.push(pi);
        }
    }
    deltas
        .into_iter()
        .map(|delta| {
            let quad = model_quad(&AnalyzerSettings::new(0.0, delta)?)?;
            Ok((delta, linear_combination(c, &quad)))
        })
        .collect()
}

pub fn format_curve(rows: &[(f64, f64)]) -> String {
    let mut out = String::from(CURVE_HEADER);
    out.push('\n');
    for (delta, value) in rows {
        out.push_str(&format!("{},{}\n", delta, format_sig(*value)));
    }
    out
}

pub fn emit_curve(model: &crate::analysis::ModelSpec, c: &CoefficientVector, step: f64, path: impl AsRef<Path>) -> Result<()> {
    let rows = curve_rows(|s| model.quad(s), c, step)?;
    write_output(path, &format_curve(&rows))
}
