//! Patch features per patient, and patient-grouped cross-validation on them.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{aggregate_patient, auc, bootstrap_distribution, make_folds, percentile_interval, EvaluationError, FoldPlan};
use crate::classifiers::{head_train, svm_train, Classifier, HeadTrainConfig, SvmConfig};
use crate::dataset::PatientRecord;
use crate::features::{BackendKind, FeatureExtractor, LayerInfo};
use crate::fingerprint;
use crate::preprocess::{
    build_subtraction, common_spacing, eligible_slices, extract_test_patches, extract_training_patches,
    prepare_model_input, resample_record, FeatureInput, InputMode, Patch, PreprocessConfig,
};
use crate::rng::{derive_seed, patient_seed, Xoshiro256};

/// Pooled features of one patient for every requested layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientFeatures {
    pub patient_id: String,
    pub label: bool,
    pub eligible_slices: usize,
    /// Layer name to one row per augmented training patch.
    pub train: BTreeMap<String, Vec<Vec<f64>>>,
    /// Layer name to one row per test patch (largest slices, centred).
    pub test: BTreeMap<String, Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTable {
    pub patients: Vec<PatientFeatures>,
    pub layers: Vec<LayerInfo>,
    /// Patients dropped for lack of an eligible slice.
    pub excluded: Vec<String>,
    /// Hash of the preprocessing config, backend, seed and cohort.
    pub fingerprint: String,
}

impl FeatureTable {
    pub fn layer(&self, name: &str) -> Result<&LayerInfo, EvaluationError> {
        self.layers
            .iter()
            .find(|l| l.name == name)
            .ok_or_else(|| EvaluationError::Invalid(format!("layer {name:?} is not in the feature table")))
    }

    pub fn n_positive(&self) -> usize {
        self.patients.iter().filter(|p| p.label).count()
    }

    pub fn train_patch_count(&self) -> usize {
        self.patients
            .iter()
            .map(|p| p.train.values().next().map_or(0, Vec::len))
            .sum()
    }

    pub fn test_patch_count(&self) -> usize {
        self.patients
            .iter()
            .map(|p| p.test.values().next().map_or(0, Vec::len))
            .sum()
    }

    /// Copy with labels permuted across patients by a seeded shuffle.
    pub fn with_permuted_labels(&self, seed: u64) -> Self {
        let mut labels: Vec<bool> = self.patients.iter().map(|p| p.label).collect();
        Xoshiro256::new(seed).shuffle(&mut labels);
        let mut out = self.clone();
        for (p, l) in out.patients.iter_mut().zip(labels) {
            p.label = l;
        }
        out.fingerprint = fingerprint(&(&self.fingerprint, "permuted", seed));
        out
    }

    /// Per-patient mean of the test-patch rows of `layer`.
    pub fn patient_means(&self, layer: &str) -> Result<(Vec<Vec<f64>>, Vec<bool>), EvaluationError> {
        let dim = self.layer(layer)?.length();
        let rows = self
            .patients
            .iter()
            .map(|p| {
                let rows = &p.test[layer];
                let mut mean = vec![0.0; dim];
                for r in rows {
                    mean.iter_mut().zip(r).for_each(|(m, v)| *m += v);
                }
                mean.iter_mut().for_each(|m| *m /= rows.len() as f64);
                mean
            })
            .collect();
        Ok((rows, self.patients.iter().map(|p| p.label).collect()))
    }
}

/// Patches of one patient after resampling, before model-input preparation.
#[derive(Debug, Clone, PartialEq)]
pub struct PatientPatches {
    pub patient_id: String,
    pub label: bool,
    pub eligible_slices: usize,
    pub train: Vec<Patch>,
    pub test: Vec<Patch>,
}

/// Resamples every record to the modal spacing and cuts training and test
/// patches. Patients with no eligible slice come back as `Err(id)`.
pub fn extract_patient_patches(
    dataset: &[PatientRecord],
    config: &PreprocessConfig,
    seed: u64,
) -> Result<Vec<Result<PatientPatches, String>>, EvaluationError> {
    config.validate()?;
    let spacing = common_spacing(dataset)?;
    dataset
        .par_iter()
        .map(|record| {
            let (seqs, ann) = resample_record(record, spacing)?;
            let eligible = eligible_slices(&ann, config.min_bbox_area).len();
            if eligible == 0 {
                return Ok(Err(ann.patient_id.clone()));
            }
            let volume = build_subtraction(&seqs)?;
            let train = extract_training_patches(&volume, &ann, config, patient_seed(seed, &ann.patient_id))?;
            let test = extract_test_patches(&volume, &ann, config)?;
            Ok(Ok(PatientPatches {
                patient_id: ann.patient_id.clone(),
                label: ann.label,
                eligible_slices: eligible,
                train,
                test,
            }))
        })
        .collect()
}

fn pooled_rows(
    extractor: &FeatureExtractor,
    patches: &[Patch],
    layers: &[&str],
    mode: InputMode,
    config: &PreprocessConfig,
    seed: u64,
) -> Result<BTreeMap<String, Vec<Vec<f64>>>, EvaluationError> {
    let per_patch = patches
        .par_iter()
        .enumerate()
        .map(|(i, patch)| {
            let input = prepare_model_input(patch, mode, config, derive_seed(seed, i as u64 + 1));
            extractor.pooled(&input, layers)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut out: BTreeMap<String, Vec<Vec<f64>>> = layers.iter().map(|l| (l.to_string(), Vec::new())).collect();
    for pooled in per_patch {
        for (name, values) in layers.iter().zip(pooled) {
            out.get_mut(*name)
                .unwrap()
                .push(values.into_iter().map(f64::from).collect());
        }
    }
    Ok(out)
}

/// Backend identity without filesystem paths.
fn backend_tag(kind: &BackendKind) -> String {
    match kind {
        BackendKind::ReferenceCnn { seed } => format!("reference:{seed}"),
        BackendKind::ExternalModel { path } => {
            format!("external:{}", path.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned()))
        }
    }
}

/// Preprocesses the cohort and pools features for every requested layer with
/// one forward pass per patch. An empty `layers` means the whole catalog.
pub fn build_feature_table(
    dataset: &[PatientRecord],
    extractor: &FeatureExtractor,
    layers: &[&str],
    config: &PreprocessConfig,
    seed: u64,
) -> Result<FeatureTable, EvaluationError> {
    if config.model_input_size != extractor.input_size() {
        return Err(EvaluationError::Invalid(format!(
            "model_input_size {} does not match the extractor input {}",
            config.model_input_size,
            extractor.input_size()
        )));
    }
    let names: Vec<&str> = if layers.is_empty() {
        extractor.catalog().iter().map(|l| l.name.as_str()).collect()
    } else {
        layers.to_vec()
    };
    let infos = names
        .iter()
        .map(|n| extractor.layer(n).cloned())
        .collect::<Result<Vec<_>, _>>()?;
    let train_mode = match config.feature_input {
        FeatureInput::Resize => InputMode::Test,
        FeatureInput::RandomCrop => InputMode::Train,
    };

    let mut patients = Vec::new();
    let mut excluded = Vec::new();
    for item in extract_patient_patches(dataset, config, seed)? {
        let pp = match item {
            Ok(pp) => pp,
            Err(id) => {
                excluded.push(id);
                continue;
            }
        };
        let stream = patient_seed(derive_seed(seed, 0xC0FFEE), &pp.patient_id);
        patients.push(PatientFeatures {
            train: pooled_rows(extractor, &pp.train, &names, train_mode, config, stream)?,
            test: pooled_rows(extractor, &pp.test, &names, InputMode::Test, config, stream)?,
            patient_id: pp.patient_id,
            label: pp.label,
            eligible_slices: pp.eligible_slices,
        });
    }
    if patients.is_empty() {
        return Err(EvaluationError::Empty("no patient has an eligible slice".into()));
    }
    let cohort: Vec<(&str, bool)> = patients.iter().map(|p| (p.patient_id.as_str(), p.label)).collect();
    let fingerprint = fingerprint(&(config, backend_tag(extractor.kind()), &infos, seed, &cohort));
    Ok(FeatureTable {
        patients,
        layers: infos,
        excluded,
        fingerprint,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ClassifierConfig {
    Svm(SvmConfig),
    Head(HeadTrainConfig),
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self::Svm(SvmConfig::default())
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<(), String> {
        match self {
            Self::Svm(c) => c.validate(),
            Self::Head(c) => c.validate(),
        }
    }

    /// Short name for tables: the kernel label or `head`.
    pub fn label(&self) -> String {
        match self {
            Self::Svm(c) => c.kernel.label(),
            Self::Head(_) => "head".into(),
        }
    }

    /// Trains on standardised-inside features; `stream` varies the head's seed.
    pub fn train(&self, rows: &[Vec<f64>], labels: &[bool], stream: u64) -> Result<Classifier, EvaluationError> {
        Ok(match self {
            Self::Svm(c) => Classifier::Svm(svm_train(rows, labels, c)?),
            Self::Head(c) => {
                let config = HeadTrainConfig {
                    seed: derive_seed(c.seed, stream),
                    ..*c
                };
                Classifier::Head(head_train(rows, labels, &config)?)
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CiMode {
    /// Resample patients from the pooled out-of-fold scores.
    #[default]
    Pooled,
    /// Resample folds and average their AUCs.
    PerFold,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvConfig {
    pub k: usize,
    pub seed: u64,
    pub n_resamples: usize,
    pub ci_mode: CiMode,
    pub ci_level: f64,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            k: 10,
            seed: 0,
            n_resamples: 2000,
            ci_mode: CiMode::Pooled,
            ci_level: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub test_patients: usize,
    pub test_positives: usize,
    pub train_patches: usize,
    /// Patient-aggregated AUC on the training patients.
    pub train_auc: Option<f64>,
    /// `None` when the test fold holds a single class.
    pub test_auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub layer: String,
    pub feature_length: usize,
    pub classifier: String,
    pub k: usize,
    pub n_patients: usize,
    pub n_positive: usize,
    pub train_patches: usize,
    pub test_patches: usize,
    pub excluded_patients: Vec<String>,
    pub folds: Vec<FoldResult>,
    pub per_fold_auc: Vec<Option<f64>>,
    pub per_fold_train_auc: Vec<Option<f64>>,
    /// Mean over folds with a defined AUC.
    pub mean_auc: f64,
    pub mean_train_auc: Option<f64>,
    pub ci_mode: CiMode,
    pub ci_level: f64,
    pub ci95: (f64, f64),
    /// Out-of-fold aggregated score per patient.
    pub per_patient_scores: BTreeMap<String, f64>,
    pub per_patient_labels: BTreeMap<String, bool>,
    pub fold_plan: FoldPlan,
    pub config_fingerprint: String,
    pub warnings: Vec<String>,
}

fn patient_score(model: &Classifier, rows: &[Vec<f64>]) -> Result<f64, EvaluationError> {
    let scores = rows.iter().map(|r| model.score(r)).collect::<Result<Vec<_>, _>>()?;
    aggregate_patient(&scores)
}

fn defined_mean(values: &[Option<f64>]) -> Option<f64> {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}

/// k-fold CV on a feature table: train on the augmented patches of the
/// training patients, score each test patient by the mean over its test
/// patches. Folds run in parallel; the report does not depend on scheduling.
pub fn cross_validate(
    table: &FeatureTable,
    layer: &str,
    classifier: &ClassifierConfig,
    cv: &CvConfig,
) -> Result<CvReport, EvaluationError> {
    classifier.validate().map_err(EvaluationError::Invalid)?;
    let info = table.layer(layer)?.clone();
    let ids: Vec<String> = table.patients.iter().map(|p| p.patient_id.clone()).collect();
    let labels: Vec<bool> = table.patients.iter().map(|p| p.label).collect();
    let plan = make_folds(&ids, &labels, cv.k, cv.seed)?;
    let fold_of: Vec<usize> = ids.iter().map(|id| plan.fold_of(id).unwrap()).collect();

    let outcomes = (0..cv.k)
        .into_par_iter()
        .map(|fold| {
            let mut rows = Vec::new();
            let mut row_labels = Vec::new();
            for (p, &f) in table.patients.iter().zip(&fold_of) {
                if f != fold {
                    rows.extend(p.train[layer].iter().cloned());
                    row_labels.extend(std::iter::repeat(p.label).take(p.train[layer].len()));
                }
            }
            let model = classifier.train(&rows, &row_labels, fold as u64 + 1)?;
            let mut test = Vec::new();
            let (mut train_scores, mut train_labels) = (Vec::new(), Vec::new());
            for (i, (p, &f)) in table.patients.iter().zip(&fold_of).enumerate() {
                let s = patient_score(&model, &p.test[layer])?;
                if f == fold {
                    test.push((i, s));
                } else {
                    train_scores.push(s);
                    train_labels.push(p.label);
                }
            }
            let train_auc = auc(&train_scores, &train_labels).ok();
            Ok::<_, EvaluationError>((rows.len(), train_auc, test))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut warnings = Vec::new();
    let mut folds = Vec::with_capacity(cv.k);
    let mut scores = vec![f64::NAN; ids.len()];
    for (fold, (train_patches, train_auc, test)) in outcomes.into_iter().enumerate() {
        let s: Vec<f64> = test.iter().map(|&(_, s)| s).collect();
        let l: Vec<bool> = test.iter().map(|&(i, _)| labels[i]).collect();
        for &(i, score) in &test {
            scores[i] = score;
        }
        let test_auc = match auc(&s, &l) {
            Ok(a) => Some(a),
            Err(EvaluationError::SingleClass) => {
                warnings.push(format!("fold {fold}: test set holds a single class; AUC undefined and excluded"));
                None
            }
            Err(e) => return Err(e),
        };
        folds.push(FoldResult {
            fold,
            test_patients: test.len(),
            test_positives: l.iter().filter(|&&x| x).count(),
            train_patches,
            train_auc,
            test_auc,
        });
    }
    let per_fold_auc: Vec<Option<f64>> = folds.iter().map(|f| f.test_auc).collect();
    let per_fold_train_auc: Vec<Option<f64>> = folds.iter().map(|f| f.train_auc).collect();
    let mean_auc = defined_mean(&per_fold_auc).ok_or(EvaluationError::NoDefinedFolds)?;
    let mean_train_auc = defined_mean(&per_fold_train_auc);

    let ci_seed = derive_seed(cv.seed, 0xB007);
    let ci95 = match cv.ci_mode {
        CiMode::Pooled => {
            let dist = bootstrap_distribution(&scores, &labels, cv.n_resamples, ci_seed)?;
            percentile_interval(&dist, cv.ci_level)
        }
        CiMode::PerFold => {
            let defined: Vec<f64> = per_fold_auc.iter().flatten().copied().collect();
            let mut rng = Xoshiro256::new(ci_seed);
            let means: Vec<f64> = (0..cv.n_resamples)
                .map(|_| (0..defined.len()).map(|_| defined[rng.below(defined.len())]).sum::<f64>() / defined.len() as f64)
                .collect();
            percentile_interval(&means, cv.ci_level)
        }
    };

    Ok(CvReport {
        layer: layer.to_string(),
        feature_length: info.length(),
        classifier: classifier.label(),
        k: cv.k,
        n_patients: ids.len(),
        n_positive: table.n_positive(),
        train_patches: table.train_patch_count(),
        test_patches: table.test_patch_count(),
        excluded_patients: table.excluded.clone(),
        per_fold_auc,
        per_fold_train_auc,
        folds,
        mean_auc,
        mean_train_auc,
        ci_mode: cv.ci_mode,
        ci_level: cv.ci_level,
        ci95,
        per_patient_scores: ids.iter().cloned().zip(scores).collect(),
        per_patient_labels: ids.iter().cloned().zip(labels).collect(),
        fold_plan: plan,
        config_fingerprint: fingerprint(&(&table.fingerprint, layer, classifier, cv)),
        warnings,
    })
}

/// Preprocess, extract `layer`, and cross-validate in one call.
pub fn run_cv(
    dataset: &[PatientRecord],
    extractor: &FeatureExtractor,
    layer: &str,
    classifier: &ClassifierConfig,
    preprocess: &PreprocessConfig,
    cv: &CvConfig,
) -> Result<CvReport, EvaluationError> {
    let table = build_feature_table(dataset, extractor, &[layer], preprocess, cv.seed)?;
    cross_validate(&table, layer, classifier, cv)
}
