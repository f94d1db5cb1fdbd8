//! Softmax head trained by momentum SGD on a tiny phantom: the head fits its
//! training patients but does not carry over to held-out ones.
//!
//! cargo run --example linear_head -- --patients 20 --replicates 8

use clap::Parser;
use dfup::classifiers::HeadTrainConfig;
use dfup::dataset::{generate_phantom, PhantomSpec};
use dfup::evaluation::{build_feature_table, cross_validate, ClassifierConfig, CvConfig};
use dfup::features::FeatureExtractor;
use dfup::preprocess::PreprocessConfig;

#[derive(Parser)]
struct Args {
    #[arg(long, default_value_t = 20)]
    patients: usize,
    #[arg(long, default_value_t = 0.0)]
    signal: f64,
    #[arg(long, default_value = "fc1")]
    layer: String,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 0.001)]
    lr: f64,
    /// Independent cohorts; train and test AUCs are averaged over them.
    #[arg(long, default_value_t = 4)]
    replicates: u64,
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args = Args::parse();
    let spec = PhantomSpec {
        n_patients: args.patients,
        positive_fraction: 0.27,
        dims: [64, 64, 8],
        lesion_radius_range: (8.0, 14.0),
        signal_strength: args.signal,
        ..PhantomSpec::default()
    };
    let preprocess = PreprocessConfig {
        patch_size: 32,
        model_input_size: 64,
        train_resize: 72,
        ..PreprocessConfig::default()
    };
    let extractor = FeatureExtractor::reference_cnn_with_input(0, 64);
    let classifier = ClassifierConfig::Head(HeadTrainConfig {
        lr: args.lr,
        ..HeadTrainConfig::default()
    });

    let (mut train_sum, mut test_sum) = (0.0, 0.0);
    for replicate in 0..args.replicates {
        let dataset = generate_phantom(&spec, replicate)?;
        let table = build_feature_table(&dataset, &extractor, &[&args.layer], &preprocess, replicate)?;
        let cv = CvConfig {
            k: args.folds,
            seed: replicate,
            ..CvConfig::default()
        };
        let report = cross_validate(&table, &args.layer, &classifier, &cv)?;
        let train = report.mean_train_auc.unwrap_or(f64::NAN);
        println!(
            "cohort {replicate}: train AUC {train:.3}, test AUC {:.3}, {} undefined folds",
            report.mean_auc,
            report.per_fold_auc.iter().filter(|a| a.is_none()).count()
        );
        train_sum += train;
        test_sum += report.mean_auc;
    }
    let n = args.replicates as f64;
    println!("mean over cohorts: train AUC {:.3}, test AUC {:.3}", train_sum / n, test_sum / n);
    Ok(())
}
