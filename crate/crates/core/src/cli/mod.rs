//! Config-driven orchestration behind the `dfup` binary.
//!
//! Exit codes: 0 success, 2 config error, 3 missing input, 4 runtime failure.
//! Failures also print one JSON object on stderr:
//! `{"error":"config|missing_input|runtime","stage":...,"message":...}`.

mod config;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

pub use config::{ModelConfig, PipelineConfig, SweepConfig};

use crate::classifiers::KernelSpec;
use crate::dataset::{generate_phantom, read_dataset, write_dataset, PatientRecord, PhantomSpec};
use crate::evaluation::{
    build_feature_table, cross_validate, per_feature_auc, write_per_feature_csv, write_report_csv, write_report_json,
    write_sweep_csv, ClassifierConfig, CvReport, FeatureTable, SweepRow,
};
use crate::features::{sidecar_path, FeatureError, FeatureExtractor};
use crate::preprocess::PreprocessConfig;
use crate::{fingerprint, write_atomic};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config parse error: {0}")]
    Config(String),
    #[error("missing input: {}", .0.display())]
    MissingInput(PathBuf),
    #[error("{stage} failed: {msg}")]
    Runtime { stage: String, msg: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::MissingInput(_) => 3,
            Self::Runtime { .. } => 4,
        }
    }

    /// Single-line machine-readable form.
    pub fn json_line(&self) -> String {
        let value = match self {
            Self::Config(msg) => serde_json::json!({"error": "config", "message": format!("config parse error: {msg}")}),
            Self::MissingInput(path) => {
                serde_json::json!({"error": "missing_input", "path": path, "message": self.to_string()})
            }
            Self::Runtime { stage, msg } => serde_json::json!({"error": "runtime", "stage": stage, "message": msg}),
        };
        value.to_string()
    }

    fn runtime(stage: &str, e: impl ToString) -> Self {
        Self::Runtime {
            stage: stage.into(),
            msg: e.to_string(),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "dfup", version, about = "Deep-feature upstaging pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic phantom dataset.
    Phantom {
        /// Phantom spec JSON; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Preprocess, extract features, cross-validate, and write reports.
    Run(RunArgs),
    /// Cross-validate every layer of the model catalog.
    SweepLayers(RunArgs),
    /// Cross-validate a patch-size x kernel grid.
    SweepGrid(RunArgs),
}

#[derive(Debug, Clone, clap::Args)]
pub struct RunArgs {
    /// Pipeline config JSON.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `cv.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides `output_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (program name first), runs the command, reports failures
/// on stderr, and returns the exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Phantom { config, seed, out } => {
            cmd_phantom(config.as_deref(), seed, &out).map(|s| serde_json::to_string(&s).unwrap())
        }
        Command::Run(args) => load_run_config(&args)
            .and_then(|c| cmd_run(&c))
            .map(|r| summary_line(&r)),
        Command::SweepLayers(args) => load_run_config(&args)
            .and_then(|c| cmd_sweep_layers(&c))
            .map(|rows| serde_json::json!({"rows": rows.len()}).to_string()),
        Command::SweepGrid(args) => load_run_config(&args)
            .and_then(|c| cmd_sweep_grid(&c))
            .map(|rows| serde_json::json!({"rows": rows.len()}).to_string()),
    };
    match result {
        Ok(line) => {
            println!("{line}");
            0
        }
        Err(e) => {
            eprintln!("{}", e.json_line());
            e.exit_code()
        }
    }
}

fn summary_line(report: &CvReport) -> String {
    serde_json::json!({
        "layer": report.layer,
        "classifier": report.classifier,
        "mean_auc": report.mean_auc,
        "ci95": [report.ci95.0, report.ci95.1],
        "patients": report.n_patients,
    })
    .to_string()
}

fn read_json_file<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::MissingInput(path.to_path_buf()),
        _ => CliError::Config(format!("{}: {e}", path.display())),
    })?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn load_run_config(args: &RunArgs) -> Result<PipelineConfig, CliError> {
    let mut config: PipelineConfig = read_json_file(&args.config)?;
    if let Some(seed) = args.seed {
        config.cv.seed = seed;
    }
    if let Some(out) = &args.out {
        config.output_dir = out.clone();
    }
    config.validate().map_err(CliError::Config)?;
    Ok(config)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhantomSummary {
    pub patients: usize,
    pub positives: usize,
    pub out: PathBuf,
}

/// Writes a phantom dataset to `out`.
pub fn cmd_phantom(spec_file: Option<&Path>, seed: u64, out: &Path) -> Result<PhantomSummary, CliError> {
    let spec: PhantomSpec = match spec_file {
        Some(path) => read_json_file(path)?,
        None => PhantomSpec::default(),
    };
    spec.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let dataset = generate_phantom(&spec, seed).map_err(|e| CliError::runtime("phantom", e))?;
    write_dataset(&dataset, out).map_err(|e| CliError::runtime("phantom", e))?;
    let positives = dataset.iter().filter(|(_, a)| a.label).count();
    log::info!("phantom: {} patients ({positives} positive) written to {}", dataset.len(), out.display());
    Ok(PhantomSummary {
        patients: dataset.len(),
        positives,
        out: out.to_path_buf(),
    })
}

fn load_dataset(config: &PipelineConfig) -> Result<Vec<PatientRecord>, CliError> {
    if !config.dataset_root.is_dir() {
        return Err(CliError::MissingInput(config.dataset_root.clone()));
    }
    let start = Instant::now();
    let dataset = read_dataset(&config.dataset_root).map_err(|e| CliError::runtime("dataset", e))?;
    if dataset.is_empty() {
        return Err(CliError::runtime("dataset", "dataset root holds no patients"));
    }
    log::info!("dataset: {} patients read in {:.2?}", dataset.len(), start.elapsed());
    Ok(dataset)
}

/// Feature extractor named by the config.
pub fn load_extractor(config: &PipelineConfig) -> Result<FeatureExtractor, CliError> {
    match &config.model {
        ModelConfig::Reference { seed } => Ok(FeatureExtractor::reference_cnn_with_input(
            *seed,
            config.preprocess.model_input_size,
        )),
        ModelConfig::External { path } => {
            for p in [path.clone(), sidecar_path(path)] {
                if !p.is_file() {
                    return Err(CliError::MissingInput(p));
                }
            }
            external_extractor(path)
        }
    }
}

#[cfg(feature = "onnx")]
fn external_extractor(path: &Path) -> Result<FeatureExtractor, CliError> {
    FeatureExtractor::load_external(path).map_err(|e| match e {
        FeatureError::MissingTap(_) | FeatureError::ShapeMismatch { .. } => CliError::Config(e.to_string()),
        other => CliError::runtime("model", other),
    })
}

#[cfg(not(feature = "onnx"))]
fn external_extractor(path: &Path) -> Result<FeatureExtractor, CliError> {
    let _ = FeatureError::UnknownLayer(String::new());
    Err(CliError::Config(format!(
        "{}: external models need the `onnx` feature",
        path.display()
    )))
}

fn feature_table(
    dataset: &[PatientRecord],
    extractor: &FeatureExtractor,
    layers: &[&str],
    preprocess: &PreprocessConfig,
    seed: u64,
) -> Result<FeatureTable, CliError> {
    let start = Instant::now();
    let table = build_feature_table(dataset, extractor, layers, preprocess, seed)
        .map_err(|e| CliError::runtime("features", e))?;
    log::info!(
        "features: {} patients, {} training patches, {} test patches, layers {:?} in {:.2?}",
        table.patients.len(),
        table.train_patch_count(),
        table.test_patch_count(),
        layers,
        start.elapsed()
    );
    for id in &table.excluded {
        log::warn!("patient {id} has no eligible slice and was excluded");
    }
    Ok(table)
}

fn evaluate(table: &FeatureTable, layer: &str, classifier: &ClassifierConfig, config: &PipelineConfig) -> Result<CvReport, CliError> {
    let start = Instant::now();
    let report = cross_validate(table, layer, classifier, &config.cv).map_err(|e| CliError::runtime("evaluate", e))?;
    log::info!(
        "evaluate: layer {layer}, {} -> mean AUC {:.4} [{:.4}, {:.4}] in {:.2?}",
        report.classifier,
        report.mean_auc,
        report.ci95.0,
        report.ci95.1,
        start.elapsed()
    );
    for w in &report.warnings {
        log::warn!("{w}");
    }
    Ok(report)
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::runtime("report", format!("{}: {e}", dir.display())))
}

/// Full pipeline for the configured layer and classifier; writes
/// `report.json`, `report.csv` and `per_feature_auc.csv`.
pub fn cmd_run(config: &PipelineConfig) -> Result<CvReport, CliError> {
    let dataset = load_dataset(config)?;
    let extractor = load_extractor(config)?;
    extractor.layer(&config.layer).map_err(|e| CliError::Config(e.to_string()))?;
    let table = feature_table(&dataset, &extractor, &[&config.layer], &config.preprocess, config.cv.seed)?;
    let report = evaluate(&table, &config.layer, &config.classifier, config)?;

    ensure_dir(&config.output_dir)?;
    let (rows, labels) = table
        .patient_means(&config.layer)
        .map_err(|e| CliError::runtime("report", e))?;
    let ranked = per_feature_auc(&rows, &labels).map_err(|e| CliError::runtime("report", e))?;
    write_report_json(&config.output_dir, &report).map_err(|e| CliError::runtime("report", e))?;
    write_report_csv(&config.output_dir, &report).map_err(|e| CliError::runtime("report", e))?;
    write_per_feature_csv(&config.output_dir, &ranked).map_err(|e| CliError::runtime("report", e))?;
    Ok(report)
}

pub const LAYER_CHECKPOINT_DIR: &str = "layers";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LayerCheckpoint {
    fingerprint: String,
    row: SweepRow,
}

/// Cross-validates each layer (the sweep's `layers`, or the full catalog).
/// Finished layers are checkpointed under `<output_dir>/layers/` and reused
/// when the config is unchanged; features are computed only for the rest.
pub fn cmd_sweep_layers(config: &PipelineConfig) -> Result<Vec<SweepRow>, CliError> {
    let extractor = load_extractor(config)?;
    let names: Vec<String> = match config.sweep.as_ref().map(|s| &s.layers) {
        Some(layers) if !layers.is_empty() => layers.clone(),
        _ => extractor.catalog().iter().map(|l| l.name.clone()).collect(),
    };
    if names.len() < 2 {
        return Err(CliError::Config("a layer sweep needs at least two taps".into()));
    }
    for name in &names {
        extractor.layer(name).map_err(|e| CliError::Config(e.to_string()))?;
    }
    let checkpoint_dir = config.output_dir.join(LAYER_CHECKPOINT_DIR);
    ensure_dir(&checkpoint_dir)?;
    let base = config.fingerprint();
    let key = |layer: &str| fingerprint(&(&base, layer));
    let path_for = |layer: &str| checkpoint_dir.join(format!("{layer}.json"));

    let mut rows: Vec<Option<SweepRow>> = names
        .iter()
        .map(|name| {
            std::fs::read_to_string(path_for(name))
                .ok()
                .and_then(|t| serde_json::from_str::<LayerCheckpoint>(&t).ok())
                .filter(|c| c.fingerprint == key(name))
                .map(|c| c.row)
        })
        .collect();
    let pending: Vec<&str> = names
        .iter()
        .zip(&rows)
        .filter(|(_, r)| r.is_none())
        .map(|(n, _)| n.as_str())
        .collect();
    log::info!("sweep-layers: {} of {} layers checkpointed", names.len() - pending.len(), names.len());

    if !pending.is_empty() {
        let dataset = load_dataset(config)?;
        let table = feature_table(&dataset, &extractor, &pending, &config.preprocess, config.cv.seed)?;
        for (name, slot) in names.iter().zip(rows.iter_mut()) {
            if slot.is_some() {
                continue;
            }
            let report = evaluate(&table, name, &config.classifier, config)?;
            let row = SweepRow::from_report(config.preprocess.patch_size, &report);
            let checkpoint = LayerCheckpoint {
                fingerprint: key(name),
                row: row.clone(),
            };
            let path = path_for(name);
            let text = serde_json::to_string_pretty(&checkpoint).unwrap();
            write_atomic(&path, text.as_bytes()).map_err(|e| CliError::runtime("report", format!("{}: {e}", path.display())))?;
            *slot = Some(row);
        }
    }
    let rows: Vec<SweepRow> = rows.into_iter().flatten().collect();
    write_sweep_csv(&config.output_dir, &rows).map_err(|e| CliError::runtime("report", e))?;
    Ok(rows)
}

/// Cross-validates every patch size x kernel cell for the configured layer.
/// Features are extracted once per patch size and shared across kernels.
pub fn cmd_sweep_grid(config: &PipelineConfig) -> Result<Vec<SweepRow>, CliError> {
    let base_svm = match &config.classifier {
        ClassifierConfig::Svm(c) => *c,
        ClassifierConfig::Head(_) => return Err(CliError::Config("sweep-grid needs an svm classifier".into())),
    };
    let sweep = config.sweep.clone().unwrap_or_default();
    let patch_sizes = if sweep.patch_sizes.is_empty() {
        vec![config.preprocess.patch_size]
    } else {
        sweep.patch_sizes.clone()
    };
    let kernels: Vec<KernelSpec> = if sweep.kernels.is_empty() {
        vec![base_svm.kernel]
    } else {
        sweep.kernels.clone()
    };
    let dataset = load_dataset(config)?;
    let extractor = load_extractor(config)?;
    extractor.layer(&config.layer).map_err(|e| CliError::Config(e.to_string()))?;

    let mut rows = Vec::with_capacity(patch_sizes.len() * kernels.len());
    for &patch_size in &patch_sizes {
        let preprocess = PreprocessConfig {
            patch_size,
            ..config.preprocess.clone()
        };
        let table = feature_table(&dataset, &extractor, &[&config.layer], &preprocess, config.cv.seed)?;
        for kernel in &kernels {
            let classifier = ClassifierConfig::Svm(crate::classifiers::SvmConfig {
                kernel: *kernel,
                ..base_svm
            });
            let report = evaluate(&table, &config.layer, &classifier, config)?;
            rows.push(SweepRow::from_report(patch_size, &report));
        }
    }
    ensure_dir(&config.output_dir)?;
    write_sweep_csv(&config.output_dir, &rows).map_err(|e| CliError::runtime("report", e))?;
    Ok(rows)
}
