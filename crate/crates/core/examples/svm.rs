//! Kernel SVM on two interleaved moons: kernels compared, model saved and
//! reloaded.
//!
//! cargo run --example svm

use dfup::classifiers::{read_svm, svm_score, svm_train, write_svm, KernelSpec, SvmConfig};
use dfup::evaluation::auc;
use dfup::rng::Xoshiro256;

fn moons(n: usize, rng: &mut Xoshiro256) -> (Vec<Vec<f64>>, Vec<bool>) {
    (0..n)
        .map(|i| {
            let upper = i % 2 == 0;
            let t = rng.uniform(0.0, std::f64::consts::PI);
            let (x, y) = if upper { (t.cos(), t.sin()) } else { (1.0 - t.cos(), 0.5 - t.sin()) };
            (vec![x + 0.15 * rng.gaussian(), y + 0.15 * rng.gaussian()], upper)
        })
        .unzip()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = Xoshiro256::new(1);
    let (train_x, train_y) = moons(300, &mut rng);
    let (test_x, test_y) = moons(300, &mut rng);

    for kernel in [KernelSpec::linear(), KernelSpec::poly(3), KernelSpec::rbf(Some(2.0))] {
        let config = SvmConfig {
            kernel,
            c: 10.0,
            ..SvmConfig::default()
        };
        let model = svm_train(&train_x, &train_y, &config)?;
        let scores = test_x.iter().map(|x| svm_score(&model, x)).collect::<Result<Vec<_>, _>>()?;
        println!(
            "{:6}: {:3} support vectors, {:5} SMO steps, test AUC {:.3}",
            kernel.label(),
            model.support_vectors.len(),
            model.iterations,
            auc(&scores, &test_y)?
        );
    }

    let model = svm_train(&train_x, &train_y, &SvmConfig {
        kernel: KernelSpec::rbf(Some(2.0)),
        c: 10.0,
        ..SvmConfig::default()
    })?;
    let path = std::env::temp_dir().join("moons.svm");
    write_svm(&model, &path)?;
    let back = read_svm(&path)?;
    assert_eq!(svm_score(&back, &test_x[0])?, svm_score(&model, &test_x[0])?);
    println!("model round-tripped through {}", path.display());
    Ok(())
}
