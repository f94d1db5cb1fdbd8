//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. `cargo test --test acceptance` (optimised test profile).

mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::{auc_bruteforce, dual_objective, gram, max_kkt_violation, numeric_grad, qp_oracle, random_svm_instance, signs};
use dfup::classifiers::{head_loss_and_grad, svm_score, svm_train, HeadParams, HeadTrainConfig, KernelSpec, SvmConfig};
use dfup::cli::{cmd_run, ModelConfig, PipelineConfig};
use dfup::dataset::{generate_phantom, write_dataset, PatientRecord, PhantomSpec};
use dfup::evaluation::{
    auc, build_feature_table, cross_validate, make_folds, per_feature_auc, ClassifierConfig, CvConfig, CvReport,
    FeatureTable,
};
use dfup::features::{extract_features, FeatureExtractor};
use dfup::preprocess::{
    build_subtraction, common_spacing, eligible_slices, extract_training_patches, resample_record, AugmentationTag,
    Patch, PreprocessConfig,
};
use dfup::rng::Xoshiro256;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn smo_vs_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = Xoshiro256::new(2024);
    let (mut worst_gap, mut worst_kkt) = (0f64, 0f64);
    for index in 0..200 {
        let inst = random_svm_instance(&mut rng, index, 6, 3);
        let config = SvmConfig {
            kernel: inst.kernel,
            c: inst.c,
            tol: 1e-8,
            ..SvmConfig::default()
        };
        let model = svm_train(&inst.x, &inst.labels, &config).map_err(err)?;
        let z = model.standardizer.transform_all(&inst.x);
        let k = gram(&model.kernel, &z);
        let y = signs(&inst.labels);
        let (best, _) = qp_oracle(&k, &y, inst.c);
        let attained = dual_objective(&k, &y, &model.alphas(inst.x.len()));
        worst_gap = worst_gap.max((attained - best).abs());
        worst_kkt = worst_kkt.max(max_kkt_violation(&model, &inst.x, &inst.labels));
    }
    let elapsed = start.elapsed();
    ensure(worst_gap <= 1e-5, format!("objective off by {worst_gap:.2e}"))?;
    ensure(worst_kkt <= 1e-3, format!("KKT violation {worst_kkt:.2e}"))?;
    ensure(elapsed < Duration::from_secs(60), format!("took {elapsed:.1?}"))?;
    Ok(format!(
        "200 instances, max |objective - oracle| {worst_gap:.1e}, max KKT violation {worst_kkt:.1e}, {elapsed:.1?}"
    ))
}

fn analytic_two_point() -> Outcome {
    let x = vec![vec![-1.0], vec![1.0]];
    let labels = [false, true];
    let config = SvmConfig {
        kernel: KernelSpec::linear(),
        c: 1.0,
        tol: 1e-10,
        ..SvmConfig::default()
    };
    let model = svm_train(&x, &labels, &config).map_err(err)?;
    let alpha = model.alphas(2);
    ensure(
        alpha.iter().all(|a| (a - 0.5).abs() <= 1e-6),
        format!("alpha = {alpha:?}"),
    )?;
    ensure(model.bias.abs() <= 1e-6, format!("bias = {}", model.bias))?;
    for v in [-3.0, -1.0, -0.25, 0.0, 0.5, 2.0] {
        let f = svm_score(&model, &[v]).map_err(err)?;
        ensure((f - v).abs() <= 1e-6, format!("f({v}) = {f}"))?;
    }
    Ok(format!("alpha = ({:.6}, {:.6}), bias {:.1e}, f(x) = x", alpha[0], alpha[1], model.bias))
}

fn auc_oracle() -> Outcome {
    let mut rng = Xoshiro256::new(77);
    let mut tied = 0;
    for trial in 0..1000 {
        let n = 2 + rng.below(29);
        let levels = 1 + rng.below(8);
        let scores: Vec<f64> = (0..n).map(|_| rng.below(levels) as f64 / 4.0).collect();
        let mut labels: Vec<bool> = (0..n).map(|_| rng.next_f64() < 0.4).collect();
        labels[0] = true;
        labels[1] = false;
        rng.shuffle(&mut labels);
        let distinct: BTreeSet<u64> = scores.iter().map(|s| s.to_bits()).collect();
        if distinct.len() < n {
            tied += 1;
        }
        let got = auc(&scores, &labels).map_err(err)?;
        let want = auc_bruteforce(&scores, &labels);
        ensure(got == want, format!("trial {trial}: {got} vs {want}"))?;
    }
    let example = auc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).map_err(err)?;
    ensure(example == 0.75, format!("worked example gives {example}"))?;
    Ok(format!("1000 instances exact ({tied} with ties), worked example 0.75"))
}

fn fold_integrity() -> Outcome {
    let mut rng = Xoshiro256::new(500);
    for trial in 0..500 {
        let n = 2 + rng.below(199);
        let k = 2 + rng.below(n - 1);
        let n_pos = 1 + rng.below(n - 1);
        let seed = rng.next_u64();
        let ids: Vec<String> = (0..n).map(|i| format!("P{i:04}")).collect();
        let mut labels: Vec<bool> = (0..n).map(|i| i < n_pos).collect();
        rng.shuffle(&mut labels);
        let plan = make_folds(&ids, &labels, k, seed).map_err(err)?;
        let folds = plan.folds();
        let seen: BTreeSet<&String> = folds.iter().flatten().collect();
        let total: usize = folds.iter().map(Vec::len).sum();
        ensure(seen.len() == n && total == n, format!("trial {trial}: not a partition"))?;
        ensure(folds.iter().all(|f| !f.is_empty()), format!("trial {trial}: empty fold"))?;
        let label_of = |id: &String| labels[id[1..].parse::<usize>().unwrap()];
        let pos: Vec<usize> = folds.iter().map(|f| f.iter().filter(|id| label_of(id)).count()).collect();
        let neg: Vec<usize> = folds.iter().zip(&pos).map(|(f, p)| f.len() - p).collect();
        let size: Vec<usize> = folds.iter().map(Vec::len).collect();
        let spread = |v: &[usize]| v.iter().max().unwrap() - v.iter().min().unwrap();
        ensure(
            spread(&pos) <= 1 && spread(&neg) <= 1 && spread(&size) <= 1,
            format!("trial {trial}: n={n} k={k} positives {pos:?} negatives {neg:?}"),
        )?;
        ensure(make_folds(&ids, &labels, k, seed).map_err(err)? == plan, "plan not deterministic")?;
    }

    let ids: Vec<String> = (0..131).map(|i| format!("P{i:04}")).collect();
    let labels: Vec<bool> = (0..131).map(|i| i < 35).collect();
    let plan = make_folds(&ids, &labels, 10, 0).map_err(err)?;
    let folds = plan.folds();
    for f in &folds {
        let pos = f.iter().filter(|id| labels[id[1..].parse::<usize>().unwrap()]).count();
        ensure(
            (13..=14).contains(&f.len()) && (3..=4).contains(&pos),
            format!("fold of {} with {pos} positives", f.len()),
        )?;
    }
    Ok("500 random (n, k, seed) partitions stratified; 131/35 at k=10 gives 13-14 patients, 3-4 positives".into())
}

fn gradient_check() -> Outcome {
    let mut rng = Xoshiro256::new(50);
    let mut worst = 0f64;
    for trial in 0..50 {
        let n = 1 + rng.below(10);
        let l = 1 + rng.below(6);
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..l).map(|_| rng.gaussian()).collect()).collect();
        let y: Vec<bool> = (0..n).map(|_| rng.next_f64() < 0.4).collect();
        let params = HeadParams {
            weights: (0..2 * l).map(|_| rng.gaussian()).collect(),
            bias: [rng.gaussian(), rng.gaussian()],
        };
        let weights = [rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0)];
        let rows: Vec<usize> = (0..n).collect();
        let (_, g) = head_loss_and_grad(&params, &x, &y, &rows, weights);
        let analytic: Vec<f64> = g.weights.iter().copied().chain(g.bias).collect();
        let numeric = numeric_grad(&params, &x, &y, &rows, weights);
        let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
        let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, b)| a - b).collect();
        let rel = norm(&diff) / norm(&analytic).max(norm(&numeric)).max(1e-12);
        ensure(rel <= 1e-4, format!("trial {trial}: relative error {rel:.2e}"))?;
        worst = worst.max(rel);
    }
    Ok(format!("50 instances, worst relative error {worst:.1e}"))
}

// End-to-end experiment settings shared by the phantom criteria.
const E2E_PATIENTS: usize = 300;
const E2E_LAYER: &str = "fc1";
const E2E_SEED: u64 = 1;

fn e2e_spec(signal: f64) -> PhantomSpec {
    PhantomSpec {
        n_patients: E2E_PATIENTS,
        positive_fraction: 35.0 / 131.0,
        dims: [64, 64, 8],
        lesion_radius_range: (8.0, 14.0),
        signal_strength: signal,
        ..PhantomSpec::default()
    }
}

fn e2e_preprocess() -> PreprocessConfig {
    PreprocessConfig {
        patch_size: 32,
        model_input_size: 64,
        train_resize: 72,
        ..PreprocessConfig::default()
    }
}

fn poly_svm() -> ClassifierConfig {
    ClassifierConfig::Svm(SvmConfig {
        kernel: KernelSpec::poly(3),
        ..SvmConfig::default()
    })
}

fn e2e_cv() -> CvConfig {
    CvConfig {
        k: 10,
        seed: E2E_SEED,
        ..CvConfig::default()
    }
}

fn describe(report: &CvReport) -> String {
    format!(
        "mean AUC {:.3} [{:.3}, {:.3}] over {} patients ({} positive)",
        report.mean_auc, report.ci95.0, report.ci95.1, report.n_patients, report.n_positive
    )
}

struct SignalRun {
    dataset: Vec<PatientRecord>,
    table: FeatureTable,
    report: CvReport,
}

fn signal_run(extractor: &FeatureExtractor) -> Result<SignalRun, String> {
    let dataset = generate_phantom(&e2e_spec(PhantomSpec::default().signal_strength), E2E_SEED).map_err(err)?;
    let table = build_feature_table(&dataset, extractor, &[E2E_LAYER], &e2e_preprocess(), E2E_SEED).map_err(err)?;
    let report = cross_validate(&table, E2E_LAYER, &poly_svm(), &e2e_cv()).map_err(err)?;
    Ok(SignalRun { dataset, table, report })
}

fn end_to_end(extractor: &FeatureExtractor, signal: &SignalRun, elapsed_signal: Duration) -> Outcome {
    let start = Instant::now();
    let null = generate_phantom(&e2e_spec(0.0), E2E_SEED).map_err(err)?;
    let table = build_feature_table(&null, extractor, &[E2E_LAYER], &e2e_preprocess(), E2E_SEED).map_err(err)?;
    let null_report = cross_validate(&table, E2E_LAYER, &poly_svm(), &e2e_cv()).map_err(err)?;
    let elapsed = elapsed_signal + start.elapsed();
    let detail = format!(
        "signal: {}; no signal: {}; {elapsed:.1?}",
        describe(&signal.report),
        describe(&null_report)
    );
    ensure(signal.report.mean_auc >= 0.85, &detail)?;
    ensure((0.40..=0.60).contains(&null_report.mean_auc), &detail)?;
    ensure(elapsed < Duration::from_secs(600), &detail)?;
    Ok(detail)
}

fn label_permutation(signal: &SignalRun) -> Outcome {
    let permuted = signal.table.with_permuted_labels(0x5eed);
    let report = cross_validate(&permuted, E2E_LAYER, &poly_svm(), &e2e_cv()).map_err(err)?;
    let detail = format!("permuted labels: {}", describe(&report));
    ensure((0.40..=0.60).contains(&report.mean_auc), &detail)?;
    Ok(detail)
}

fn single_feature_screen(signal: &SignalRun) -> Outcome {
    let (rows, labels) = signal.table.patient_means(E2E_LAYER).map_err(err)?;
    let ranked = per_feature_auc(&rows, &labels).map_err(err)?;
    let detail = format!(
        "best single feature #{} AUC {:.3}, SVM {:.3}",
        ranked[0].feature_index, ranked[0].auc, signal.report.mean_auc
    );
    ensure(ranked[0].auc <= signal.report.mean_auc + 0.02, &detail)?;
    Ok(detail)
}

// Tiny cohorts without planted signal: anything the head learns is noise.
const OVERFIT_PATIENTS: usize = 12;
const OVERFIT_COHORTS: u64 = 24;

fn overfitting(extractor: &FeatureExtractor) -> Outcome {
    let spec = PhantomSpec {
        n_patients: OVERFIT_PATIENTS,
        signal_strength: 0.0,
        ..e2e_spec(0.0)
    };
    let classifier = ClassifierConfig::Head(HeadTrainConfig::default());
    let (mut train, mut test) = (0.0, 0.0);
    for cohort in 0..OVERFIT_COHORTS {
        let dataset = generate_phantom(&spec, 1000 + cohort).map_err(err)?;
        let table = build_feature_table(&dataset, extractor, &[E2E_LAYER], &e2e_preprocess(), cohort).map_err(err)?;
        let cv = CvConfig {
            k: 3,
            seed: cohort,
            ..CvConfig::default()
        };
        let report = cross_validate(&table, E2E_LAYER, &classifier, &cv).map_err(err)?;
        train += report.mean_train_auc.ok_or("no training AUC")?;
        test += report.mean_auc;
    }
    let (train, test) = (train / OVERFIT_COHORTS as f64, test / OVERFIT_COHORTS as f64);
    let detail = format!(
        "{OVERFIT_COHORTS} cohorts of {OVERFIT_PATIENTS} patients, 3-fold: mean train AUC {train:.3}, mean test AUC {test:.3}"
    );
    ensure(train >= 0.95 && test < 0.65, &detail)?;
    Ok(detail)
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(err)?;
    let spec = PhantomSpec {
        n_patients: 20,
        ..e2e_spec(0.5)
    };
    let data = dir.path().join("data");
    write_dataset(&generate_phantom(&spec, 9).map_err(err)?, &data).map_err(err)?;
    let run = |name: &str| -> Result<(Vec<u8>, Duration), String> {
        let out = dir.path().join(name);
        let config = PipelineConfig {
            dataset_root: data.clone(),
            model: ModelConfig::Reference { seed: 0 },
            layer: "fc1".into(),
            preprocess: e2e_preprocess(),
            classifier: poly_svm(),
            cv: CvConfig {
                k: 5,
                seed: 3,
                ..CvConfig::default()
            },
            output_dir: out.clone(),
            sweep: None,
        };
        let start = Instant::now();
        cmd_run(&config).map_err(err)?;
        let elapsed = start.elapsed();
        std::fs::read(out.join("report.json")).map(|b| (b, elapsed)).map_err(err)
    };
    let (a, ta) = run("a")?;
    let (b, _) = run("b")?;
    ensure(a == b, "report.json differs between runs")?;
    ensure(ta < Duration::from_secs(300), format!("20-patient run took {ta:.1?}"))?;
    Ok(format!("two cmd_run reports byte-identical ({} bytes), 20-patient run {ta:.1?}", a.len()))
}

fn identities(extractor: &FeatureExtractor, signal: &SignalRun) -> Outcome {
    for size in [16, 33, 64, 224] {
        let net = FeatureExtractor::reference_cnn_with_input(0, size);
        let patch = Patch {
            size,
            data: (0..size * size * 3).map(|i| (i % 17) as f32 / 16.0).collect(),
            patient_id: "P0".into(),
            slice_index: 0,
            tag: AugmentationTag::Center,
            label: false,
        };
        for layer in net.catalog() {
            let v = extract_features(&net, std::slice::from_ref(&patch), &layer.name).map_err(err)?;
            ensure(
                v[0].values.len() == layer.shape[0],
                format!("{} at {size}: {} vs {} channels", layer.name, v[0].values.len(), layer.shape[0]),
            )?;
        }
    }
    let channels = extractor.layer(E2E_LAYER).map_err(err)?.shape[0];

    let config = e2e_preprocess();
    let spacing = common_spacing(&signal.dataset).map_err(err)?;
    let mut total = 0;
    for record in &signal.dataset {
        let resampled = resample_record(record, spacing).map_err(err)?;
        let eligible = eligible_slices(&resampled.1, config.min_bbox_area).len();
        let id = &resampled.1.patient_id;
        let Some(row) = signal.table.patients.iter().find(|p| &p.patient_id == id) else {
            ensure(eligible == 0 && signal.table.excluded.contains(id), format!("{id} missing from table"))?;
            continue;
        };
        let volume = build_subtraction(&resampled.0).map_err(err)?;
        let patches = extract_training_patches(&volume, &resampled.1, &config, 7).map_err(err)?;
        let rows = &row.train[E2E_LAYER];
        ensure(
            patches.len() == eligible * 6 && rows.len() == eligible * 6 && row.eligible_slices == eligible,
            format!("{}: {} patches for {eligible} eligible slices", row.patient_id, patches.len()),
        )?;
        ensure(rows.iter().all(|r| r.len() == channels), "feature row length")?;
        total += patches.len();
    }
    Ok(format!(
        "pooled lengths equal channel counts for every tap at 4 input sizes; {total} training patches = 6 x eligible slices on {} patients",
        signal.table.patients.len()
    ))
}

fn main() {
    let mut failures = 0;
    let mut report = |name: &str, outcome: std::thread::Result<Outcome>| {
        let line = match outcome {
            Ok(Ok(detail)) => format!("PASS {name}: {detail}"),
            Ok(Err(detail)) => {
                failures += 1;
                format!("FAIL {name}: {detail}")
            }
            Err(_) => {
                failures += 1;
                format!("FAIL {name}: panicked")
            }
        };
        println!("{line}");
    };
    let run = |f: &dyn Fn() -> Outcome| catch_unwind(AssertUnwindSafe(f));

    report("smo_vs_oracle", run(&smo_vs_oracle));
    report("analytic_two_point", run(&analytic_two_point));
    report("auc_oracle", run(&auc_oracle));
    report("fold_integrity", run(&fold_integrity));
    report("head_gradient_check", run(&gradient_check));

    let extractor = FeatureExtractor::reference_cnn_with_input(0, e2e_preprocess().model_input_size);
    let start = Instant::now();
    let signal = catch_unwind(AssertUnwindSafe(|| signal_run(&extractor)));
    let elapsed_signal = start.elapsed();
    match signal {
        Ok(Ok(signal)) => {
            report("end_to_end_signal", run(&|| end_to_end(&extractor, &signal, elapsed_signal)));
            report("label_permutation_null", run(&|| label_permutation(&signal)));
            report("single_feature_screen", run(&|| single_feature_screen(&signal)));
            report("pooling_and_patch_counts", run(&|| identities(&extractor, &signal)));
        }
        other => {
            let why = match other {
                Ok(Err(e)) => e,
                _ => "panicked".into(),
            };
            for name in [
                "end_to_end_signal",
                "label_permutation_null",
                "single_feature_screen",
                "pooling_and_patch_counts",
            ] {
                report(name, Ok(Err(format!("signal phantom run failed: {why}"))));
            }
        }
    }
    report("overfitting_head", run(&|| overfitting(&extractor)));
    report("determinism", run(&determinism));

    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
