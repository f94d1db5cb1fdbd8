//! Load an ONNX model with its `meta.json` sidecar, list the taps, and pool
//! one synthetic patch through it.
//!
//! cargo run --example external_model -- path/to/model.onnx

use dfup::features::FeatureExtractor;
use dfup::preprocess::{AugmentationTag, Patch};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args().nth(1).ok_or("usage: external_model <model.onnx>")?;
    let extractor = FeatureExtractor::load_external(path.as_ref())?;
    let size = extractor.input_size();
    println!("input {size}x{size}");
    for layer in extractor.catalog() {
        println!("tap {:24} raw {:?}", layer.name, layer.shape);
    }

    let patch = Patch {
        size,
        data: (0..size * size * 3).map(|i| ((i * 37) % 256) as f32).collect(),
        patient_id: "demo".into(),
        slice_index: 0,
        tag: AugmentationTag::Center,
        label: false,
    };
    let names: Vec<&str> = extractor.catalog().iter().map(|l| l.name.as_str()).collect();
    for (name, values) in names.iter().zip(extractor.pooled(&patch, &names)?) {
        let max = values.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        println!("{name}: {} pooled values, max {max:.4}", values.len());
    }
    Ok(())
}
