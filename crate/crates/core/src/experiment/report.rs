//! Run reports and the files written under an output directory.
//!
//! `report.json` holds everything except wall-clock time, so two runs with
//! the same config and seed produce identical bytes. Timing goes to
//! `timing.json`.
//!
//! `summary.csv` columns: `row,accuracy,precision,recall,f1,auc,n_rows,
//! threshold,accuracy_std,precision_std,recall_std,f1_std,auc_std`. Rows, in
//! order: `fold_1..fold_n`, `aggregate`, then `validation`, `oot` and
//! `external` when present. Std columns are empty except on `aggregate`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::benchmark::{BenchmarkOutcome, DataSummary};
use super::config::ExperimentConfig;
use super::grid::{GridCell, GridResult};
use super::training::EpochStats;
use crate::error::{Error, Result};
use crate::metrics::MetricsReport;
use crate::optim::write_energy_trace;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

pub const REPORT_FILE: &str = "report.json";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const ENERGY_TRACE_FILE: &str = "energy_trace.csv";
pub const PARAMS_FILE: &str = "params.txt";
pub const TIMING_FILE: &str = "timing.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunKind {
    Train,
    Grid,
    Benchmark,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub kind: RunKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<ExperimentConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<DataSummary>,
    /// Per-fold validation metrics from time-ordered CV.
    #[serde(default)]
    pub folds: Vec<MetricsReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aggregate: Option<MetricsReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation: Option<MetricsReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oot: Option<MetricsReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub external: Option<MetricsReport>,
    /// Final fit's per-epoch losses.
    #[serde(default)]
    pub curves: Vec<EpochStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_epoch: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selected: Option<GridCell>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy_trace_file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params_file: Option<String>,
    #[serde(skip)]
    pub wall_clock_secs: Option<f64>,
}

impl RunReport {
    pub fn new(kind: RunKind) -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            kind,
            config: None,
            data: None,
            folds: Vec::new(),
            aggregate: None,
            validation: None,
            oot: None,
            external: None,
            curves: Vec::new(),
            best_epoch: None,
            selected: None,
            grid: None,
            energy_trace_file: None,
            params_file: None,
            wall_clock_secs: None,
        }
    }

    /// Labelled rows of the CSV summary, in file order.
    pub fn summary_rows(&self) -> Vec<(String, &MetricsReport)> {
        let mut rows: Vec<(String, &MetricsReport)> =
            self.folds.iter().enumerate().map(|(i, r)| (format!("fold_{}", i + 1), r)).collect();
        for (name, r) in [
            ("aggregate", &self.aggregate),
            ("validation", &self.validation),
            ("oot", &self.oot),
            ("external", &self.external),
        ] {
            if let Some(r) = r {
                rows.push((name.to_string(), r));
            }
        }
        rows
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    CsvSummary,
}

fn write_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Runtime(format!("cannot write {}: {e}", path.display()))
}

fn summary_csv(report: &RunReport) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "row",
        "accuracy",
        "precision",
        "recall",
        "f1",
        "auc",
        "n_rows",
        "threshold",
        "accuracy_std",
        "precision_std",
        "recall_std",
        "f1_std",
        "auc_std",
    ])?;
    for (label, r) in report.summary_rows() {
        let mut rec = vec![label];
        rec.extend(r.values().iter().map(|v| v.to_string()));
        rec.push(r.n_rows.to_string());
        rec.push(r.threshold.to_string());
        match &r.std {
            Some(s) => rec.extend([s.accuracy, s.precision, s.recall, s.f1, s.auc].iter().map(|v| v.to_string())),
            None => rec.extend(std::iter::repeat(String::new()).take(5)),
        }
        w.write_record(&rec)?;
    }
    w.into_inner().map_err(|e| Error::Runtime(e.to_string()))
}

pub fn export_report(report: &RunReport, path: &Path, format: ReportFormat) -> Result<()> {
    let bytes = match format {
        ReportFormat::Json => {
            let mut b = serde_json::to_vec_pretty(report)?;
            b.push(b'\n');
            b
        }
        ReportFormat::CsvSummary => summary_csv(report)?,
    };
    fs::write(path, bytes).map_err(|e| write_err(path, e))
}

pub fn read_report(path: &Path) -> Result<RunReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::Data {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Data {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Writes report.json, summary.csv, timing.json and, when present, the
/// params snapshot and energy trace. Returns the report as written.
pub fn write_outputs(outcome: &BenchmarkOutcome, out_dir: &Path) -> Result<RunReport> {
    fs::create_dir_all(out_dir).map_err(|e| write_err(out_dir, e))?;
    let mut report = outcome.report.clone();
    if let Some(params) = &outcome.params {
        params.save(&out_dir.join(PARAMS_FILE))?;
        report.params_file = Some(PARAMS_FILE.into());
        write_energy_trace(&outcome.energy_trace, &out_dir.join(ENERGY_TRACE_FILE))?;
        report.energy_trace_file = Some(ENERGY_TRACE_FILE.into());
    }
    export_report(&report, &out_dir.join(REPORT_FILE), ReportFormat::Json)?;
    export_report(&report, &out_dir.join(SUMMARY_FILE), ReportFormat::CsvSummary)?;
    let timing: PathBuf = out_dir.join(TIMING_FILE);
    let mut f = fs::File::create(&timing).map_err(|e| write_err(&timing, e))?;
    writeln!(
        f,
        "{}",
        serde_json::json!({ "wall_clock_secs": report.wall_clock_secs.unwrap_or(0.0) })
    )
    .map_err(|e| write_err(&timing, e))?;
    Ok(report)
}
