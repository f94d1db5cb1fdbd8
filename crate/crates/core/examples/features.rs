//! Reference CNN taps: catalog, raw maps, channel-max pooling, and a feature
//! dump on disk.
//!
//! cargo run --example features -- /tmp/features

use dfup::dataset::{generate_phantom, PhantomSpec};
use dfup::evaluation::extract_patient_patches;
use dfup::features::{extract_features, read_feature_dump, write_feature_dump, FeatureExtractor};
use dfup::preprocess::{prepare_model_input, InputMode, PreprocessConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::path::PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "features".into()));
    let extractor = FeatureExtractor::reference_cnn_with_input(0, 64);
    for layer in extractor.catalog() {
        println!("tap {:6} raw {:?} -> pooled length {}", layer.name, layer.shape, layer.length());
    }

    let spec = PhantomSpec {
        n_patients: 6,
        dims: [64, 64, 8],
        lesion_radius_range: (8.0, 14.0),
        ..PhantomSpec::default()
    };
    let config = PreprocessConfig {
        patch_size: 32,
        model_input_size: 64,
        train_resize: 72,
        ..PreprocessConfig::default()
    };
    let cohort = generate_phantom(&spec, 5)?;
    let patients = extract_patient_patches(&cohort, &config, 0)?;
    let inputs: Vec<_> = patients
        .into_iter()
        .filter_map(Result::ok)
        .flat_map(|p| p.test)
        .map(|patch| prepare_model_input(&patch, InputMode::Test, &config, 0))
        .collect();

    let maps = extractor.forward(&inputs[0])?;
    let conv2 = &maps["conv2"];
    println!("conv2 map of the first patch: {}x{}x{}", conv2.channels, conv2.height, conv2.width);

    let vectors = extract_features(&extractor, &inputs, "fc1")?;
    write_feature_dump(&out, "fc1", &vectors)?;
    let back = read_feature_dump(&out, "fc1")?;
    assert_eq!(back, vectors);
    println!("{} fc1 vectors written to {}", back.len(), out.join("fc1").display());
    for v in back.iter().take(3) {
        let head: Vec<String> = v.values.iter().take(4).map(|x| format!("{x:.3}")).collect();
        println!("  {} slice {}: [{}, ...]", v.patient_id, v.slice_index, head.join(", "));
    }
    Ok(())
}
