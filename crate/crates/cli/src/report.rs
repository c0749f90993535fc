//! Report writers: relativity/priori CSV tables, the markdown metrics
//! summary, the JSON report, the descent-trace CSV, and the simulation
//! report. All numeric CSV cells go through [`fmt_sig`] so re-loading a file
//! and re-formatting it reproduces the bytes exactly.

use std::path::Path;

use bms_core::{DescentTrace, Estimate, FixValue, SchemeMetrics};
use serde::Serialize;

use crate::CliError;

/// Formats with 6 significant digits, `%g`-style: fixed-point notation for
/// moderate exponents, scientific otherwise, trailing zeros trimmed.
pub fn fmt_sig(value: f64, significant: usize) -> String {
    if value == 0.0 {
        return "0".into();
    }
    if value < 0.0 {
        return format!("-{}", fmt_sig(-value, significant));
    }
    let sci = format!("{:.*e}", significant - 1, value);
    let (mantissa, exponent) = sci.split_once('e').expect("exponent marker");
    let exponent: i32 = exponent.parse().expect("exponent");
    let digits: String = mantissa.chars().filter(|c| c.is_ascii_digit()).collect();
    if exponent < -4 || exponent >= significant as i32 {
        let trimmed = trim_zeros(mantissa);
        return format!("{trimmed}e{exponent}");
    }
    let rendered = if exponent >= 0 {
        let split = exponent as usize + 1;
        if split >= digits.len() {
            format!("{}{}", digits.as_str(), "0".repeat(split - digits.len()))
        } else {
            format!("{}.{}", &digits[..split], &digits[split..])
        }
    } else {
        format!("0.{}{}", "0".repeat(-exponent as usize - 1), digits)
    };
    trim_zeros(&rendered)
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents)
        .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))
}

/// Minimal CSV reader for the emitted tables (no quoting is ever produced).
pub fn load_csv(path: &Path) -> Result<Vec<Vec<String>>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    Ok(text
        .lines()
        .filter(|line| !line.is_empty())
        .map(|line| line.split(',').map(str::to_string).collect())
        .collect())
}

/// One labelled row of per-level values.
pub struct LevelRow {
    pub table: String,
    pub risk_group: String,
    pub values: Vec<f64>,
}

pub fn relativities_csv(levels: usize, rows: &[LevelRow]) -> String {
    let mut out = String::from("table,risk_group");
    for level in 1..=levels {
        out.push_str(&format!(",level_{level}"));
    }
    out.push('\n');
    for row in rows {
        out.push_str(&row.table);
        out.push(',');
        out.push_str(&row.risk_group);
        for v in &row.values {
            out.push(',');
            out.push_str(&fmt_sig(*v, 6));
        }
        out.push('\n');
    }
    out
}

/// One labelled row of per-class values.
pub struct ClassRow {
    pub table: String,
    pub values: Vec<f64>,
}

pub fn priori_csv(classes: usize, rows: &[ClassRow]) -> String {
    let mut out = String::from("table");
    for class in 1..=classes {
        out.push_str(&format!(",class_{class}"));
    }
    out.push('\n');
    for row in rows {
        out.push_str(&row.table);
        for v in &row.values {
            out.push(',');
            out.push_str(&fmt_sig(*v, 6));
        }
        out.push('\n');
    }
    out
}

pub fn trace_csv(trace: &DescentTrace) -> String {
    let mut out = String::from("pair,label,gamma_iter,xi_iter,fix,hmse\n");
    for (index, step) in trace.steps.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            index + 1,
            step.label(),
            step.gamma_iter,
            step.xi_iter,
            fmt_sig(step.fix.display_value(), 6),
            fmt_sig(step.hmse, 6),
        ));
    }
    out
}

/// A row of the markdown summary table.
pub struct MetricsRow {
    pub method: String,
    pub metrics: SchemeMetrics,
    /// Participates in the sequential delta chain (the pure view and the
    /// debiased variant mirror other rows, so they do not).
    pub in_delta_chain: bool,
}

pub fn metrics_markdown(title: &str, notes: Option<&str>, classes: usize, rows: &[MetricsRow]) -> String {
    let mut out = format!("# {title}\n\n");
    if let Some(notes) = notes {
        out.push_str(&format!("> {notes}\n\n"));
    }
    out.push_str("| method |");
    for class in 1..=classes {
        out.push_str(&format!(" E[γ\\|class {class}] |"));
    }
    out.push_str(" FIX | ΔFIX | ΔFIX %max | HMSE | ΔHMSE %max |\n");
    out.push_str(&"|---".repeat(classes + 6));
    out.push_str("|\n");

    // Sequential deltas; the percentage columns are normalized by the column
    // maxima so the steps are comparable across rows.
    let max_fix = rows
        .iter()
        .map(|r| r.metrics.fix.display_value())
        .fold(0.0f64, f64::max);
    let max_hmse = rows.iter().map(|r| r.metrics.hmse).fold(0.0f64, f64::max);
    let mut previous: Option<(f64, f64)> = None;
    let mut any_undefined = false;
    for row in rows {
        let fix = row.metrics.fix.display_value();
        let hmse = row.metrics.hmse;
        out.push_str(&format!("| {} |", row.method));
        for mean in &row.metrics.mean_relativity_by_class {
            out.push_str(&format!(" {mean:.3} |"));
        }
        let marker = if row.metrics.fix == FixValue::Undefined {
            any_undefined = true;
            "†"
        } else {
            ""
        };
        out.push_str(&format!(" {fix:.4}{marker} |"));
        match (row.in_delta_chain, previous) {
            (true, Some((prev_fix, prev_hmse))) => {
                let raw = fix - prev_fix;
                out.push_str(&format!(" {raw:+.4} |"));
                if max_fix > 0.0 {
                    out.push_str(&format!(" {:+.1}% |", raw / max_fix * 100.0));
                } else {
                    out.push_str(" - |");
                }
                out.push_str(&format!(" {hmse:.4} |"));
                if max_hmse > 0.0 {
                    out.push_str(&format!(" {:+.1}% |", (hmse - prev_hmse) / max_hmse * 100.0));
                } else {
                    out.push_str(" - |");
                }
            }
            _ => {
                out.push_str(&format!(" - | - | {hmse:.4} | - |"));
            }
        }
        out.push('\n');
        if row.in_delta_chain {
            previous = Some((fix, hmse));
        }
    }
    if any_undefined {
        out.push_str(
            "\n† FIX is undefined for this premium (zero pure-relativity variance); \
             shown as 0 by convention.\n",
        );
    }
    out
}

#[derive(Serialize)]
pub struct Report {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
    pub portfolio: PortfolioEcho,
    pub rule: RuleEcho,
    pub quadrature_nodes: usize,
    pub level_law: Vec<f64>,
    pub per_class_level_law: Vec<Vec<f64>>,
    /// Var(E[Λ|L]) / Var(Λ); absent for single-class portfolios.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alt_fairness: Option<f64>,
    pub schemes: Vec<SchemeReport>,
}

#[derive(Serialize)]
pub struct PortfolioEcho {
    pub classes: Vec<ClassEcho>,
    pub psi: f64,
}

#[derive(Serialize)]
pub struct ClassEcho {
    pub lambda: f64,
    pub weight: f64,
}

#[derive(Serialize)]
pub struct RuleEcho {
    pub levels: usize,
    pub penalty: usize,
}

#[derive(Serialize)]
pub struct SchemeReport {
    pub name: String,
    pub individualized: bool,
    pub xi: Vec<f64>,
    /// One row for shared tables, one per class otherwise.
    pub gamma: Vec<Vec<f64>>,
    pub metrics: SchemeMetrics,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub descent: Option<DescentSummary>,
}

#[derive(Serialize)]
pub struct DescentSummary {
    pub cycles: usize,
    pub converged: bool,
    pub anchor_level: usize,
    pub q: f64,
}

#[derive(Serialize)]
pub struct SimReport {
    pub name: String,
    pub seed: u64,
    pub policyholders: usize,
    pub burn_in_years: u32,
    pub sample_years: u32,
    pub class_counts: Vec<usize>,
    pub level_law: Vec<ComparedEstimate>,
    pub per_class_level_law: Vec<Vec<ComparedEstimate>>,
    pub schemes: Vec<SimSchemeReport>,
}

#[derive(Serialize)]
pub struct SimSchemeReport {
    pub name: String,
    pub mean_pure_relativity_by_class: Vec<ComparedEstimate>,
    pub fix: ComparedEstimate,
    pub hmse: ComparedEstimate,
}

/// Empirical value ± SE next to its analytic counterpart and the z-score.
#[derive(Serialize)]
pub struct ComparedEstimate {
    pub value: f64,
    pub std_error: f64,
    pub analytic: f64,
    /// Absent when the standard error vanishes.
    pub z: Option<f64>,
}

impl ComparedEstimate {
    pub fn new(estimate: Estimate, analytic: f64) -> Self {
        ComparedEstimate {
            value: estimate.value,
            std_error: estimate.std_error,
            analytic,
            z: estimate.z_score(analytic),
        }
    }
}

pub fn to_json_string<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Config(format!("cannot serialize report: {e}")))?;
    text.push('\n');
    Ok(text)
}
