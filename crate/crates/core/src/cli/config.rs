use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::classifiers::KernelSpec;
use crate::evaluation::{ClassifierConfig, CvConfig};
use crate::fingerprint;
use crate::preprocess::PreprocessConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelConfig {
    /// Built-in network; input size follows `preprocess.model_input_size`.
    Reference {
        #[serde(default)]
        seed: u64,
    },
    /// ONNX file with a `meta.json` sidecar in the same directory.
    External { path: PathBuf },
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::Reference { seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct SweepConfig {
    pub patch_sizes: Vec<usize>,
    pub kernels: Vec<KernelSpec>,
    /// Layers for `sweep-layers`; empty means the whole catalog.
    pub layers: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub dataset_root: PathBuf,
    pub model: ModelConfig,
    pub layer: String,
    pub preprocess: PreprocessConfig,
    pub classifier: ClassifierConfig,
    pub cv: CvConfig,
    pub output_dir: PathBuf,
    pub sweep: Option<SweepConfig>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            dataset_root: PathBuf::from("data"),
            model: ModelConfig::default(),
            layer: "fc1".into(),
            preprocess: PreprocessConfig::default(),
            classifier: ClassifierConfig::default(),
            cv: CvConfig::default(),
            output_dir: PathBuf::from("out"),
            sweep: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.preprocess.validate().map_err(|e| e.to_string())?;
        self.classifier.validate()?;
        if self.cv.k < 2 {
            return Err(format!("cv.k must be at least 2, got {}", self.cv.k));
        }
        if self.cv.n_resamples < crate::evaluation::MIN_RESAMPLES {
            return Err(format!(
                "cv.n_resamples must be at least {}",
                crate::evaluation::MIN_RESAMPLES
            ));
        }
        if !(self.cv.ci_level > 0.0 && self.cv.ci_level < 1.0) {
            return Err("cv.ci_level must be in (0, 1)".into());
        }
        if self.layer.is_empty() {
            return Err("layer must be named".into());
        }
        if let Some(sweep) = &self.sweep {
            for k in &sweep.kernels {
                k.validate()?;
            }
            if sweep.patch_sizes.contains(&0) {
                return Err("sweep patch sizes must be positive".into());
            }
        }
        Ok(())
    }

    /// Hash of every setting except filesystem paths.
    pub fn fingerprint(&self) -> String {
        let model = match &self.model {
            ModelConfig::Reference { seed } => format!("reference:{seed}"),
            ModelConfig::External { path } => format!(
                "external:{}",
                path.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned())
            ),
        };
        fingerprint(&(model, &self.layer, &self.preprocess, &self.classifier, &self.cv, &self.sweep))
    }
}
