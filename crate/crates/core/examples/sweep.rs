//! Patch-size x kernel grid and a layer sweep through the same entry points
//! as `dfup sweep-grid` and `dfup sweep-layers`.
//!
//! cargo run --example sweep -- /tmp/sweep

use dfup::classifiers::KernelSpec;
use dfup::cli::{cmd_sweep_grid, cmd_sweep_layers, PipelineConfig, SweepConfig};
use dfup::dataset::{generate_phantom, write_dataset, PhantomSpec};
use dfup::evaluation::{CvConfig, SweepRow};
use dfup::preprocess::PreprocessConfig;

fn print(rows: &[SweepRow]) {
    println!("patch  kernel  layer  train   test   95% CI");
    for r in rows {
        println!(
            "{:5}  {:6}  {:5}  {}  {:.3}  [{:.3}, {:.3}]",
            r.patch_size,
            r.kernel,
            r.layer,
            r.train_auc.map_or("  -  ".into(), |a| format!("{a:.3}")),
            r.test_auc,
            r.ci_lo,
            r.ci_hi
        );
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = std::path::PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "sweep".into()));
    let spec = PhantomSpec {
        n_patients: 60,
        dims: [64, 64, 8],
        lesion_radius_range: (8.0, 14.0),
        signal_strength: 0.1,
        ..PhantomSpec::default()
    };
    write_dataset(&generate_phantom(&spec, 8)?, &root.join("data"))?;

    let config = PipelineConfig {
        dataset_root: root.join("data"),
        layer: "fc1".into(),
        preprocess: PreprocessConfig {
            patch_size: 32,
            model_input_size: 64,
            train_resize: 72,
            ..PreprocessConfig::default()
        },
        cv: CvConfig {
            k: 5,
            n_resamples: 500,
            ..CvConfig::default()
        },
        output_dir: root.join("grid"),
        sweep: Some(SweepConfig {
            patch_sizes: vec![24, 32, 40],
            kernels: vec![KernelSpec::linear(), KernelSpec::poly(3), KernelSpec::rbf(None)],
            layers: Vec::new(),
        }),
        ..PipelineConfig::default()
    };
    print(&cmd_sweep_grid(&config)?);

    let layers = PipelineConfig {
        output_dir: root.join("layers"),
        ..config
    };
    print(&cmd_sweep_layers(&layers)?);
    println!("sweep.csv files under {}", root.display());
    Ok(())
}
