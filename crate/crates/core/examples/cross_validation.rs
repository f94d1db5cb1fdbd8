//! Phantom cohort -> reference CNN features -> 10-fold SVM cross-validation.
//!
//! cargo run --example cross_validation -- --patients 120 --signal 1.0 --layer fc1

use std::time::Instant;

use clap::Parser;
use dfup::classifiers::{KernelSpec, SvmConfig};
use dfup::dataset::{generate_phantom, PhantomSpec};
use dfup::evaluation::{build_feature_table, cross_validate, per_feature_auc, ClassifierConfig, CvConfig};
use dfup::features::FeatureExtractor;
use dfup::preprocess::PreprocessConfig;

#[derive(Parser)]
struct Args {
    #[arg(long, default_value_t = 120)]
    patients: usize,
    #[arg(long, default_value_t = 1.0)]
    signal: f64,
    #[arg(long, default_value = "fc1")]
    layer: String,
    #[arg(long, default_value_t = 32)]
    patch: usize,
    #[arg(long, default_value_t = 64)]
    input: usize,
    /// linear, poly or rbf.
    #[arg(long, default_value = "poly")]
    kernel: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Shuffle labels after feature extraction.
    #[arg(long)]
    permute: bool,
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args = Args::parse();
    let spec = PhantomSpec {
        n_patients: args.patients,
        positive_fraction: 35.0 / 131.0,
        dims: [64, 64, 8],
        lesion_radius_range: (8.0, 14.0),
        signal_strength: args.signal,
        ..PhantomSpec::default()
    };
    let dataset = generate_phantom(&spec, args.seed)?;
    let extractor = FeatureExtractor::reference_cnn_with_input(args.seed, args.input);
    let preprocess = PreprocessConfig {
        patch_size: args.patch,
        model_input_size: args.input,
        train_resize: args.input + args.input / 8,
        ..PreprocessConfig::default()
    };
    let kernel = match args.kernel.as_str() {
        "linear" => KernelSpec::linear(),
        "rbf" => KernelSpec::rbf(None),
        _ => KernelSpec::poly(3),
    };
    let classifier = ClassifierConfig::Svm(SvmConfig {
        kernel,
        ..SvmConfig::default()
    });
    let cv = CvConfig {
        seed: args.seed,
        ..CvConfig::default()
    };

    let start = Instant::now();
    let mut table = build_feature_table(&dataset, &extractor, &[&args.layer], &preprocess, args.seed)?;
    if args.permute {
        table = table.with_permuted_labels(args.seed ^ 0x5eed);
    }
    println!(
        "{} patients ({} positive), {} training patches, {} test patches, features in {:.1?}",
        table.patients.len(),
        table.n_positive(),
        table.train_patch_count(),
        table.test_patch_count(),
        start.elapsed()
    );
    let start = Instant::now();
    let report = cross_validate(&table, &args.layer, &classifier, &cv)?;
    println!("cross-validation in {:.1?}", start.elapsed());
    for fold in &report.folds {
        let show = |v: Option<f64>| v.map_or("-".to_string(), |a| format!("{a:.3}"));
        println!(
            "fold {:2}: {:2} patients, train AUC {}, test AUC {}",
            fold.fold,
            fold.test_patients,
            show(fold.train_auc),
            show(fold.test_auc)
        );
    }
    println!(
        "{} on {}: mean AUC {:.3}, 95% CI [{:.3}, {:.3}]",
        report.classifier, report.layer, report.mean_auc, report.ci95.0, report.ci95.1
    );
    let (rows, labels) = table.patient_means(&args.layer)?;
    let ranked = per_feature_auc(&rows, &labels)?;
    println!("best single feature: #{} with AUC {:.3}", ranked[0].feature_index, ranked[0].auc);
    for w in &report.warnings {
        println!("warning: {w}");
    }
    Ok(())
}
