//! Layer-tapped convolutional feature extraction.
//!
//! A [`FeatureExtractor`] wraps a [`Backend`] that maps a model-input patch
//! to one raw activation map per catalogued tap. [`pool_layer`] reduces a
//! `C x H x W` map to a length-`C` vector by taking the maximum over each
//! channel plane; fully connected taps (`C x 1 x 1`) pass through unchanged.

#[cfg(feature = "onnx")]
mod onnx;
mod reference;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::preprocess::{AugmentationTag, Patch};

#[cfg(feature = "onnx")]
pub use onnx::{ModelSidecar, OnnxBackend, SidecarPreprocessing, SidecarTap};
pub use reference::{adaptive_max_pool, patch_to_chw, Conv2d, Linear, ReferenceCnn};

/// Name of the JSON sidecar that sits next to an external model.
pub const SIDECAR_FILE: &str = "meta.json";

pub fn sidecar_path(model: &Path) -> PathBuf {
    model.parent().unwrap_or_else(|| Path::new(".")).join(SIDECAR_FILE)
}

#[derive(Debug, thiserror::Error)]
pub enum FeatureError {
    #[error("unknown layer {0:?}")]
    UnknownLayer(String),
    #[error("input size mismatch: extractor expects {expected}x{expected}, got {got}x{got}")]
    InputSize { expected: usize, got: usize },
    #[error("missing tap {0:?}")]
    MissingTap(String),
    #[error("shape mismatch for tap {tap:?}: declared length {expected}, model produces {got:?}")]
    ShapeMismatch { tap: String, expected: usize, got: Vec<usize> },
    #[error("cannot load model {path}: {msg}")]
    Load { path: PathBuf, msg: String },
    #[error("inference failed: {0}")]
    Inference(String),
    #[error("{path}: {msg}")]
    Io { path: PathBuf, msg: String },
}

/// Raw activations of one tap, channel-major (`C x H x W`).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl FeatureMap {
    pub fn vector(values: Vec<f32>) -> Self {
        Self {
            channels: values.len(),
            height: 1,
            width: 1,
            data: values,
        }
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerInfo {
    pub name: String,
    /// `[channels, height, width]`; fully connected taps are `[n, 1, 1]`.
    pub shape: [usize; 3],
}

impl LayerInfo {
    pub fn new(name: &str, shape: [usize; 3]) -> Self {
        Self {
            name: name.to_string(),
            shape,
        }
    }

    /// Length of the pooled feature vector.
    pub fn length(&self) -> usize {
        self.shape[0]
    }
}

/// Inference engine behind a [`FeatureExtractor`]. Implementations must be
/// deterministic and free of cross-call state.
pub trait Backend: Send + Sync {
    fn catalog(&self) -> &[LayerInfo];
    fn input_size(&self) -> usize;
    fn forward(&self, patch: &Patch) -> Result<BTreeMap<String, FeatureMap>, FeatureError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    ExternalModel { path: PathBuf },
    ReferenceCnn { seed: u64 },
}

pub struct FeatureExtractor {
    kind: BackendKind,
    backend: Box<dyn Backend>,
}

impl std::fmt::Debug for FeatureExtractor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FeatureExtractor")
            .field("kind", &self.kind)
            .field("catalog", &self.catalog())
            .finish()
    }
}

impl FeatureExtractor {
    pub fn new(kind: BackendKind, backend: Box<dyn Backend>) -> Self {
        Self { kind, backend }
    }

    /// The built-in reference network at the standard 224-pixel input.
    pub fn reference_cnn(seed: u64) -> Self {
        Self::reference_cnn_with_input(seed, 224)
    }

    pub fn reference_cnn_with_input(seed: u64, input_size: usize) -> Self {
        Self::new(
            BackendKind::ReferenceCnn { seed },
            Box::new(ReferenceCnn::new(seed, input_size)),
        )
    }

    /// Loads an ONNX model plus its `meta.json` sidecar and probes every tap.
    #[cfg(feature = "onnx")]
    pub fn load_external(path: &Path) -> Result<Self, FeatureError> {
        let backend = OnnxBackend::load(path)?;
        Ok(Self::new(
            BackendKind::ExternalModel {
                path: path.to_path_buf(),
            },
            Box::new(backend),
        ))
    }

    pub fn kind(&self) -> &BackendKind {
        &self.kind
    }

    pub fn catalog(&self) -> &[LayerInfo] {
        self.backend.catalog()
    }

    pub fn input_size(&self) -> usize {
        self.backend.input_size()
    }

    pub fn layer(&self, name: &str) -> Result<&LayerInfo, FeatureError> {
        self.catalog()
            .iter()
            .find(|l| l.name == name)
            .ok_or_else(|| FeatureError::UnknownLayer(name.to_string()))
    }

    pub fn forward(&self, patch: &Patch) -> Result<BTreeMap<String, FeatureMap>, FeatureError> {
        if patch.size != self.input_size() {
            return Err(FeatureError::InputSize {
                expected: self.input_size(),
                got: patch.size,
            });
        }
        self.backend.forward(patch)
    }

    /// Forward pass pooled for each requested tap, in request order.
    pub fn pooled(&self, patch: &Patch, layers: &[&str]) -> Result<Vec<Vec<f32>>, FeatureError> {
        for name in layers {
            self.layer(name)?;
        }
        let mut maps = self.forward(patch)?;
        layers
            .iter()
            .map(|name| {
                maps.remove(*name)
                    .map(|m| pool_layer(&m))
                    .ok_or_else(|| FeatureError::MissingTap(name.to_string()))
            })
            .collect()
    }
}

/// Channel-wise spatial maximum. Identity on `C x 1 x 1` maps.
pub fn pool_layer(map: &FeatureMap) -> Vec<f32> {
    (0..map.channels)
        .map(|c| map.plane(c).iter().copied().fold(f32::NEG_INFINITY, f32::max))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f32>,
    pub layer_name: String,
    pub patient_id: String,
    pub slice_index: usize,
    pub tag: AugmentationTag,
}

/// Forward and pool each patch; output order matches input order.
pub fn extract_features(
    extractor: &FeatureExtractor,
    patches: &[Patch],
    layer_name: &str,
) -> Result<Vec<FeatureVector>, FeatureError> {
    let expected = extractor.layer(layer_name)?.length();
    patches
        .par_iter()
        .map(|patch| {
            let values = extractor.pooled(patch, &[layer_name])?.remove(0);
            if values.len() != expected {
                return Err(FeatureError::ShapeMismatch {
                    tap: layer_name.to_string(),
                    expected,
                    got: vec![values.len()],
                });
            }
            Ok(FeatureVector {
                values,
                layer_name: layer_name.to_string(),
                patient_id: patch.patient_id.clone(),
                slice_index: patch.slice_index,
                tag: patch.tag,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DumpRow {
    patient_id: String,
    slice_index: usize,
    tag: AugmentationTag,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DumpIndex {
    layer: String,
    rows: usize,
    length: usize,
    provenance: Vec<DumpRow>,
}

/// Writes `<out>/<layer>/features.f32` (row-major N x L, little-endian) and
/// `<out>/<layer>/index.json` with one provenance row per vector.
pub fn write_feature_dump(out: &Path, layer: &str, vectors: &[FeatureVector]) -> Result<(), FeatureError> {
    let io = |path: &Path, e: &dyn std::fmt::Display| FeatureError::Io {
        path: path.to_path_buf(),
        msg: e.to_string(),
    };
    let dir = out.join(layer);
    fs::create_dir_all(&dir).map_err(|e| io(&dir, &e))?;
    let length = vectors.first().map_or(0, |v| v.values.len());
    if let Some(bad) = vectors.iter().find(|v| v.values.len() != length) {
        return Err(FeatureError::ShapeMismatch {
            tap: layer.to_string(),
            expected: length,
            got: vec![bad.values.len()],
        });
    }
    let bytes: Vec<u8> = vectors
        .iter()
        .flat_map(|v| v.values.iter().flat_map(|x| x.to_le_bytes()))
        .collect();
    let data_path = dir.join("features.f32");
    fs::write(&data_path, bytes).map_err(|e| io(&data_path, &e))?;
    let index = DumpIndex {
        layer: layer.to_string(),
        rows: vectors.len(),
        length,
        provenance: vectors
            .iter()
            .map(|v| DumpRow {
                patient_id: v.patient_id.clone(),
                slice_index: v.slice_index,
                tag: v.tag,
            })
            .collect(),
    };
    let index_path = dir.join("index.json");
    let text = serde_json::to_string_pretty(&index).map_err(|e| io(&index_path, &e))?;
    fs::write(&index_path, text).map_err(|e| io(&index_path, &e))
}

/// Reads a dump written by [`write_feature_dump`].
pub fn read_feature_dump(out: &Path, layer: &str) -> Result<Vec<FeatureVector>, FeatureError> {
    let io = |path: &Path, e: &dyn std::fmt::Display| FeatureError::Io {
        path: path.to_path_buf(),
        msg: e.to_string(),
    };
    let dir = out.join(layer);
    let index_path = dir.join("index.json");
    let text = fs::read_to_string(&index_path).map_err(|e| io(&index_path, &e))?;
    let index: DumpIndex = serde_json::from_str(&text).map_err(|e| io(&index_path, &e))?;
    let data_path = dir.join("features.f32");
    let bytes = fs::read(&data_path).map_err(|e| io(&data_path, &e))?;
    if bytes.len() != index.rows * index.length * 4 || index.provenance.len() != index.rows {
        return Err(io(&data_path, &"payload length mismatch"));
    }
    let values: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(index
        .provenance
        .into_iter()
        .enumerate()
        .map(|(i, row)| FeatureVector {
            values: values[i * index.length..(i + 1) * index.length].to_vec(),
            layer_name: index.layer.clone(),
            patient_id: row.patient_id,
            slice_index: row.slice_index,
            tag: row.tag,
        })
        .collect())
}
