//! Run reports: per-instance rows, per-dataset summaries, and JSON, CSV and
//! Markdown renderings with the column order Instance, Obj., Gap(%), Time.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("baseline objective must be positive, got {0}")]
    NonPositiveBaseline(f64),
    #[error("unknown report format {0:?}")]
    UnknownFormat(String),
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Percentage difference of `obj` relative to `baseline`.
pub fn compute_gap(obj: f64, baseline: f64) -> Result<f64, ReportError> {
    if !(baseline > 0.0) {
        return Err(ReportError::NonPositiveBaseline(baseline));
    }
    Ok((obj - baseline) / baseline * 100.0)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimes {
    pub init_s: f64,
    pub grid_s: f64,
    pub path_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    /// Group label used for summary rows, e.g. `TSP1K`.
    pub dataset: String,
    pub name: String,
    pub n: usize,
    pub mode: String,
    pub seed: u64,
    pub obj: Option<f64>,
    pub baseline: Option<f64>,
    pub gap: Option<f64>,
    pub time_s: f64,
    pub phases: PhaseTimes,
    pub tour_file: Option<PathBuf>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    /// Echo of the configuration that produced the rows.
    pub config: serde_json::Value,
    pub rows: Vec<RunRow>,
}

/// One line of the summary table: means over a dataset's instances.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub label: String,
    pub instances: usize,
    pub failed: usize,
    pub obj: Option<f64>,
    /// Gap of the mean objective against the mean baseline, over instances
    /// that have both.
    pub gap: Option<f64>,
    pub time_s: f64,
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, c) = xs.fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
    (c > 0).then(|| s / c as f64)
}

/// Groups rows by dataset in first-seen order.
pub fn summarize(report: &RunReport) -> Vec<SummaryRow> {
    let mut labels: Vec<&str> = Vec::new();
    for r in &report.rows {
        if !labels.contains(&r.dataset.as_str()) {
            labels.push(&r.dataset);
        }
    }
    labels
        .into_iter()
        .map(|label| {
            let rows: Vec<&RunRow> = report.rows.iter().filter(|r| r.dataset == label).collect();
            let paired: Vec<(f64, f64)> = rows.iter().filter_map(|r| Some((r.obj?, r.baseline?))).collect();
            let gap = match (mean(paired.iter().map(|p| p.0)), mean(paired.iter().map(|p| p.1))) {
                (Some(o), Some(b)) => compute_gap(o, b).ok(),
                _ => None,
            };
            SummaryRow {
                label: label.to_string(),
                instances: rows.len(),
                failed: rows.iter().filter(|r| r.obj.is_none()).count(),
                obj: mean(rows.iter().filter_map(|r| r.obj)),
                gap,
                time_s: mean(rows.iter().map(|r| r.time_s)).unwrap_or(0.0),
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            "md" | "markdown" => Ok(Self::Markdown),
            _ => Err(ReportError::UnknownFormat(s.to_string())),
        }
    }
}

impl ReportFormat {
    /// Format implied by a file extension, if recognized.
    pub fn from_path(path: &Path) -> Option<Self> {
        path.extension()?.to_str()?.parse().ok()
    }
}

const COLUMNS: [&str; 4] = ["Instance", "Obj.", "Gap(%)", "Time"];

fn fmt_time(s: f64) -> String {
    if s < 60.0 {
        format!("{s:.1}s")
    } else if s < 3600.0 {
        format!("{:.1}m", s / 60.0)
    } else {
        format!("{:.1}h", s / 3600.0)
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"))
}

pub fn render_report(report: &RunReport, format: ReportFormat) -> Result<String, ReportError> {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report)?;
            s.push('\n');
            Ok(s)
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(COLUMNS)?;
            for row in summarize(report) {
                let num = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
                w.write_record([row.label, num(row.obj), num(row.gap), row.time_s.to_string()])?;
            }
            let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
            Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
        }
        ReportFormat::Markdown => {
            let mut s = format!("| {} |\n|:--|--:|--:|--:|\n", COLUMNS.join(" | "));
            for row in summarize(report) {
                let _ = writeln!(
                    s,
                    "| {} | {} | {} | {} |",
                    row.label,
                    fmt_opt(row.obj),
                    fmt_opt(row.gap),
                    fmt_time(row.time_s)
                );
            }
            Ok(s)
        }
    }
}

pub fn emit_report(report: &RunReport, format: ReportFormat, path: &Path) -> Result<(), ReportError> {
    let text = render_report(report, format)?;
    std::fs::write(path, text).map_err(|source| ReportError::Write {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_json_report(text: &str) -> Result<RunReport, ReportError> {
    Ok(serde_json::from_str(text)?)
}
