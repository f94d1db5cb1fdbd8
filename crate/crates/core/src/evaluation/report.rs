//! Report files. Every file is written to a temporary sibling and renamed.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CvReport, EvaluationError, FeatureAuc};
use crate::write_atomic;

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";
pub const SWEEP_CSV: &str = "sweep.csv";
pub const PER_FEATURE_CSV: &str = "per_feature_auc.csv";

/// One cell of a patch-size x kernel or per-layer sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub patch_size: usize,
    pub kernel: String,
    pub layer: String,
    pub feature_length: usize,
    /// Patient-aggregated AUC on training folds.
    pub train_auc: Option<f64>,
    pub test_auc: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

impl SweepRow {
    pub fn from_report(patch_size: usize, report: &CvReport) -> Self {
        Self {
            patch_size,
            kernel: report.classifier.clone(),
            layer: report.layer.clone(),
            feature_length: report.feature_length,
            train_auc: report.mean_train_auc,
            test_auc: report.mean_auc,
            ci_lo: report.ci95.0,
            ci_hi: report.ci95.1,
        }
    }
}

fn io_err(path: &Path, e: impl ToString) -> EvaluationError {
    EvaluationError::Io {
        path: path.to_path_buf(),
        msg: e.to_string(),
    }
}

fn csv_bytes<F>(path: &Path, fill: F) -> Result<Vec<u8>, EvaluationError>
where
    F: FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    fill(&mut w).map_err(|e| io_err(path, e))?;
    w.into_inner().map_err(|e| io_err(path, e))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| format!("{v:.6}"))
}

pub fn write_report_json(dir: &Path, report: &CvReport) -> Result<(), EvaluationError> {
    let path = dir.join(REPORT_JSON);
    let mut text = serde_json::to_string_pretty(report).map_err(|e| io_err(&path, e))?;
    text.push('\n');
    write_atomic(&path, text.as_bytes()).map_err(|e| io_err(&path, e))
}

pub fn read_report_json(path: &Path) -> Result<CvReport, EvaluationError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| io_err(path, e))
}

/// One row per fold.
pub fn write_report_csv(dir: &Path, report: &CvReport) -> Result<(), EvaluationError> {
    let path = dir.join(REPORT_CSV);
    let bytes = csv_bytes(&path, |w| {
        w.write_record(["fold", "test_patients", "test_positives", "train_patches", "train_auc", "test_auc"])?;
        for f in &report.folds {
            w.write_record([
                f.fold.to_string(),
                f.test_patients.to_string(),
                f.test_positives.to_string(),
                f.train_patches.to_string(),
                opt(f.train_auc),
                opt(f.test_auc),
            ])?;
        }
        Ok(())
    })?;
    write_atomic(&path, &bytes).map_err(|e| io_err(&path, e))
}

pub fn write_sweep_csv(dir: &Path, rows: &[SweepRow]) -> Result<(), EvaluationError> {
    let path = dir.join(SWEEP_CSV);
    let bytes = csv_bytes(&path, |w| {
        w.write_record([
            "patch_size",
            "kernel",
            "layer",
            "feature_length",
            "train_auc",
            "test_auc",
            "ci_lo",
            "ci_hi",
        ])?;
        for r in rows {
            w.write_record([
                r.patch_size.to_string(),
                r.kernel.clone(),
                r.layer.clone(),
                r.feature_length.to_string(),
                opt(r.train_auc),
                format!("{:.6}", r.test_auc),
                format!("{:.6}", r.ci_lo),
                format!("{:.6}", r.ci_hi),
            ])?;
        }
        Ok(())
    })?;
    write_atomic(&path, &bytes).map_err(|e| io_err(&path, e))
}

pub fn write_per_feature_csv(dir: &Path, ranked: &[FeatureAuc]) -> Result<(), EvaluationError> {
    let path = dir.join(PER_FEATURE_CSV);
    let bytes = csv_bytes(&path, |w| {
        w.write_record(["rank", "feature_index", "auc"])?;
        for (rank, f) in ranked.iter().enumerate() {
            w.write_record([(rank + 1).to_string(), f.feature_index.to_string(), format!("{:.6}", f.auc)])?;
        }
        Ok(())
    })?;
    write_atomic(&path, &bytes).map_err(|e| io_err(&path, e))
}
