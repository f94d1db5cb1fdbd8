//! ONNX backend built on tract.
//!
//! The model directory holds the graph and a `meta.json` sidecar:
//!
//! ```json
//! {
//!   "input_size": 224,
//!   "taps": [{"name": "conv1", "length": 64}, {"name": "fc1", "length": 1000}],
//!   "preprocessing": {"mean": [104.0, 117.0, 123.0], "scale": 1.0, "channel_order": "bgr"}
//! }
//! ```
//!
//! Each tap names a graph outlet (an output name or node name) whose value is
//! `[1, C, H, W]` or `[1, C]` with `C == length`. The network input is
//! `[1, 3, S, S]` f32, computed per channel as `(x - mean[c]) * scale`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use tract_onnx::prelude::*;

use super::{Backend, FeatureError, FeatureMap, LayerInfo};
use crate::preprocess::Patch;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidecarTap {
    pub name: String,
    pub length: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ChannelOrder {
    #[default]
    Rgb,
    Bgr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SidecarPreprocessing {
    pub mean: [f32; 3],
    pub scale: f32,
    pub channel_order: ChannelOrder,
}

impl Default for SidecarPreprocessing {
    fn default() -> Self {
        Self {
            mean: [0.0; 3],
            scale: 1.0,
            channel_order: ChannelOrder::Rgb,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSidecar {
    pub input_size: usize,
    pub taps: Vec<SidecarTap>,
    #[serde(default)]
    pub preprocessing: SidecarPreprocessing,
}

impl ModelSidecar {
    pub fn path_for(model: &Path) -> PathBuf {
        super::sidecar_path(model)
    }
}

pub struct OnnxBackend {
    plan: Arc<TypedRunnableModel>,
    catalog: Vec<LayerInfo>,
    input_size: usize,
    preprocessing: SidecarPreprocessing,
}

fn load_err(path: &Path, msg: impl std::fmt::Display) -> FeatureError {
    FeatureError::Load {
        path: path.to_path_buf(),
        msg: msg.to_string(),
    }
}

fn has_outlet(model: &InferenceModel, name: &str) -> bool {
    model.outlet_labels.values().any(|label| label == name) || model.nodes().iter().any(|n| n.name == name)
}

impl OnnxBackend {
    pub fn load(path: &Path) -> Result<Self, FeatureError> {
        let sidecar_path = ModelSidecar::path_for(path);
        let text = std::fs::read_to_string(&sidecar_path).map_err(|e| load_err(&sidecar_path, e))?;
        let sidecar: ModelSidecar = serde_json::from_str(&text).map_err(|e| load_err(&sidecar_path, e))?;
        if sidecar.taps.is_empty() {
            return Err(load_err(&sidecar_path, "sidecar declares no taps"));
        }
        let size = sidecar.input_size;

        let model = tract_onnx::onnx().model_for_path(path).map_err(|e| load_err(path, e))?;
        for tap in &sidecar.taps {
            if !has_outlet(&model, &tap.name) {
                return Err(FeatureError::MissingTap(tap.name.clone()));
            }
        }
        let names: Vec<&str> = sidecar.taps.iter().map(|t| t.name.as_str()).collect();
        let plan = model
            .with_input_fact(0, f32::fact([1, 3, size, size]).into())
            .and_then(|m| m.with_outputs_by_name(&names))
            .and_then(|m| m.into_optimized())
            .and_then(|m| m.into_runnable())
            .map_err(|e| load_err(path, format!("{e:?}")))?;

        // Probe with a zero image to learn and check every tap's shape.
        let probe = Tensor::zero::<f32>(&[1, 3, size, size]).map_err(|e| load_err(path, e))?;
        let outputs = plan.run(tvec!(probe.into())).map_err(|e| load_err(path, e))?;
        let mut catalog = Vec::with_capacity(sidecar.taps.len());
        for (tap, value) in sidecar.taps.iter().zip(outputs.iter()) {
            let shape = value.shape().to_vec();
            let chw = match shape.as_slice() {
                [1, c, h, w] if *c == tap.length => [*c, *h, *w],
                [1, c] if *c == tap.length => [*c, 1, 1],
                _ => {
                    return Err(FeatureError::ShapeMismatch {
                        tap: tap.name.clone(),
                        expected: tap.length,
                        got: shape,
                    })
                }
            };
            catalog.push(LayerInfo::new(&tap.name, chw));
        }
        Ok(Self {
            plan,
            catalog,
            input_size: size,
            preprocessing: sidecar.preprocessing,
        })
    }

    fn input_tensor(&self, patch: &Patch) -> Result<Tensor, FeatureError> {
        let n = patch.size * patch.size;
        let p = &self.preprocessing;
        let mut data = vec![0f32; 3 * n];
        for (i, px) in patch.data.chunks_exact(3).enumerate() {
            for c in 0..3 {
                let src = match p.channel_order {
                    ChannelOrder::Rgb => c,
                    ChannelOrder::Bgr => 2 - c,
                };
                data[c * n + i] = (px[src] - p.mean[c]) * p.scale;
            }
        }
        Tensor::from_shape(&[1, 3, patch.size, patch.size], &data).map_err(|e| FeatureError::Inference(e.to_string()))
    }
}

impl Backend for OnnxBackend {
    fn catalog(&self) -> &[LayerInfo] {
        &self.catalog
    }

    fn input_size(&self) -> usize {
        self.input_size
    }

    fn forward(&self, patch: &Patch) -> Result<BTreeMap<String, FeatureMap>, FeatureError> {
        let input = self.input_tensor(patch)?;
        let outputs = self
            .plan
            .run(tvec!(input.into()))
            .map_err(|e| FeatureError::Inference(e.to_string()))?;
        self.catalog
            .iter()
            .zip(outputs.iter())
            .map(|(layer, value)| {
                let data: Vec<f32> = value
                    .to_plain_array_view::<f32>()
                    .map_err(|e| FeatureError::Inference(e.to_string()))?
                    .iter()
                    .copied()
                    .collect();
                let [c, h, w] = layer.shape;
                if data.len() != c * h * w {
                    return Err(FeatureError::ShapeMismatch {
                        tap: layer.name.clone(),
                        expected: layer.length(),
                        got: value.shape().to_vec(),
                    });
                }
                Ok((
                    layer.name.clone(),
                    FeatureMap {
                        channels: c,
                        height: h,
                        width: w,
                        data,
                    },
                ))
            })
            .collect()
    }
}
