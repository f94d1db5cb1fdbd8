//! Patient-grouped stratified cross-validation, AUC, bootstrap intervals and
//! report emission.

mod folds;
mod metrics;
mod pipeline;
mod report;

pub use folds::{make_folds, FoldPlan};
pub use metrics::{
    aggregate_patient, auc, bootstrap_ci, bootstrap_ci_level, bootstrap_distribution, per_feature_auc,
    percentile_interval, quantile, FeatureAuc, MIN_RESAMPLES,
};
pub use pipeline::{
    build_feature_table, cross_validate, extract_patient_patches, run_cv, CiMode, ClassifierConfig, CvConfig,
    CvReport, FeatureTable, FoldResult, PatientFeatures, PatientPatches,
};
pub use report::{
    read_report_json, write_per_feature_csv, write_report_csv, write_report_json, write_sweep_csv, SweepRow,
    PER_FEATURE_CSV, REPORT_CSV, REPORT_JSON, SWEEP_CSV,
};

use crate::classifiers::ClassifierError;
use crate::features::FeatureError;
use crate::preprocess::PreprocessError;

#[derive(Debug, thiserror::Error)]
pub enum EvaluationError {
    #[error("both classes must be present")]
    SingleClass,
    #[error("{0}")]
    Empty(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("fold plan: {0}")]
    Folds(String),
    #[error("no fold has a defined AUC")]
    NoDefinedFolds,
    #[error("preprocess: {0}")]
    Preprocess(#[from] PreprocessError),
    #[error("features: {0}")]
    Features(#[from] FeatureError),
    #[error("classifier: {0}")]
    Classifier(#[from] ClassifierError),
    #[error("{path}: {msg}")]
    Io { path: std::path::PathBuf, msg: String },
}
