//! Spacing normalisation, subtraction images, and patch extraction for one
//! phantom patient. Writes the centre patch of each channel as a PGM image.
//!
//! cargo run --example patches -- /tmp/patches

use std::io::Write;

use dfup::dataset::{generate_phantom, PhantomSpec};
use dfup::preprocess::{
    build_subtraction, common_spacing, eligible_slices, extract_test_patches, extract_training_patches,
    prepare_model_input, resample_record, AugmentationTag, Image2D, InputMode, PreprocessConfig,
};

fn write_pgm(path: &std::path::Path, img: &Image2D) -> std::io::Result<()> {
    let (lo, hi) = img.data.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let scale = if hi > lo { 255.0 / (hi - lo) } else { 0.0 };
    let mut f = std::fs::File::create(path)?;
    write!(f, "P5\n{} {}\n255\n", img.width, img.height)?;
    f.write_all(&img.data.iter().map(|v| ((v - lo) * scale) as u8).collect::<Vec<_>>())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::path::PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "patches".into()));
    std::fs::create_dir_all(&out)?;
    let spec = PhantomSpec {
        n_patients: 8,
        dims: [64, 64, 8],
        lesion_radius_range: (8.0, 14.0),
        ..PhantomSpec::default()
    };
    let cohort = generate_phantom(&spec, 3)?;
    let config = PreprocessConfig {
        patch_size: 32,
        model_input_size: 64,
        train_resize: 72,
        ..PreprocessConfig::default()
    };

    let spacing = common_spacing(&cohort)?;
    println!("common spacing {:.3} x {:.3} mm", spacing[0], spacing[1]);
    let (seqs, ann) = resample_record(&cohort[0], spacing)?;
    println!(
        "{}: {:?} -> {:?} after resampling",
        ann.patient_id,
        cohort[0].0.dims(),
        seqs.dims()
    );
    let eligible = eligible_slices(&ann, config.min_bbox_area);
    let volume = build_subtraction(&seqs)?;
    let train = extract_training_patches(&volume, &ann, &config, 11)?;
    let test = extract_test_patches(&volume, &ann, &config)?;
    println!(
        "eligible slices {eligible:?}: {} training patches, {} test patches",
        train.len(),
        test.len()
    );
    for p in train.iter().take(6) {
        match p.tag {
            AugmentationTag::Center => println!("  slice {} centre", p.slice_index),
            AugmentationTag::Rotation { angle_deg } => println!("  slice {} rotated {angle_deg:.1} deg", p.slice_index),
        }
    }

    let input = prepare_model_input(&test[0], InputMode::Test, &config, 0);
    for c in 0..3 {
        write_pgm(&out.join(format!("patch_c{c}.pgm")), &test[0].channel(c))?;
        write_pgm(&out.join(format!("input_c{c}.pgm")), &input.channel(c))?;
    }
    println!("wrote {}x{} patch and {}x{} model input to {}", test[0].size, test[0].size, input.size, input.size, out.display());
    Ok(())
}
