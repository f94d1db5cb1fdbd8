//! Independent oracles shared by the integration tests and the acceptance
//! harness.
#![allow(dead_code)]

use dfup::classifiers::{head_loss_and_grad, svm_score, HeadParams, KernelSpec, SvmModel};
use dfup::rng::Xoshiro256;
use nalgebra::{DMatrix, DVector};

/// Gram matrix from an explicit formula, not the crate's kernel code.
pub fn gram(kernel: &KernelSpec, x: &[Vec<f64>]) -> DMatrix<f64> {
    let gamma = kernel.gamma.expect("resolved kernel");
    let n = x.len();
    DMatrix::from_fn(n, n, |i, j| {
        let dot: f64 = x[i].iter().zip(&x[j]).map(|(a, b)| a * b).sum();
        match kernel.kind {
            dfup::classifiers::KernelKind::Linear => dot,
            dfup::classifiers::KernelKind::Poly => (gamma * dot + kernel.coef0).powi(kernel.degree as i32),
            dfup::classifiers::KernelKind::Rbf => {
                let d2: f64 = x[i].iter().zip(&x[j]).map(|(a, b)| (a - b).powi(2)).sum();
                (-gamma * d2).exp()
            }
        }
    })
}

/// `Σα − ½ αᵀQα` with `Q_ij = y_i y_j K_ij`.
pub fn dual_objective(k: &DMatrix<f64>, y: &[f64], alpha: &[f64]) -> f64 {
    let n = y.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += alpha[i] * alpha[j] * y[i] * y[j] * k[(i, j)];
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}

/// Exact maximum of the soft-margin dual by enumerating every assignment of
/// each variable to {0, C, free}. For each pattern the free block solves the
/// equality-constrained stationarity system (SVD least squares); consistent,
/// box-feasible solutions are candidates and the best one is returned.
/// Exponential in N; meant for N <= 8.
pub fn qp_oracle(k: &DMatrix<f64>, y: &[f64], c: f64) -> (f64, Vec<f64>) {
    let n = y.len();
    let mut best = (f64::NEG_INFINITY, vec![0.0; n]);
    let mut pattern = vec![0u8; n];
    loop {
        if let Some(alpha) = solve_pattern(k, y, c, &pattern) {
            let obj = dual_objective(k, y, &alpha);
            if obj > best.0 {
                best = (obj, alpha);
            }
        }
        let mut i = 0;
        while i < n {
            pattern[i] += 1;
            if pattern[i] < 3 {
                break;
            }
            pattern[i] = 0;
            i += 1;
        }
        if i == n {
            return best;
        }
    }
}

fn solve_pattern(k: &DMatrix<f64>, y: &[f64], c: f64, pattern: &[u8]) -> Option<Vec<f64>> {
    let n = y.len();
    let mut alpha: Vec<f64> = pattern.iter().map(|&p| if p == 1 { c } else { 0.0 }).collect();
    let free: Vec<usize> = (0..n).filter(|&i| pattern[i] == 2).collect();
    if free.is_empty() {
        let eq: f64 = alpha.iter().zip(y).map(|(a, y)| a * y).sum();
        return (eq.abs() < 1e-12).then_some(alpha);
    }
    let m = free.len();
    // [Q_FF y_F; y_Fᵀ 0] [α_F; ν] = [1 - Q_FB α_B; -y_Bᵀ α_B]
    let q = |i: usize, j: usize| y[i] * y[j] * k[(i, j)];
    let mut a = DMatrix::zeros(m + 1, m + 1);
    let mut b = DVector::zeros(m + 1);
    for (r, &i) in free.iter().enumerate() {
        for (s, &j) in free.iter().enumerate() {
            a[(r, s)] = q(i, j);
        }
        a[(r, m)] = y[i];
        a[(m, r)] = y[i];
        b[r] = 1.0 - (0..n).filter(|j| pattern[*j] != 2).map(|j| q(i, j) * alpha[j]).sum::<f64>();
    }
    b[m] = -(0..n).filter(|j| pattern[*j] != 2).map(|j| y[j] * alpha[j]).sum::<f64>();
    let svd = a.clone().svd(true, true);
    let sol = svd.solve(&b, 1e-10).ok()?;
    let residual = (&a * &sol - &b).norm();
    if residual > 1e-8 * (1.0 + b.norm()) {
        return None;
    }
    for (r, &i) in free.iter().enumerate() {
        let v = sol[r];
        if v < -1e-10 || v > c + 1e-10 {
            return None;
        }
        alpha[i] = v.clamp(0.0, c);
    }
    Some(alpha)
}

/// `(#{pos > neg} + ½ #{pos == neg}) / (n_pos n_neg)` by enumerating pairs.
pub fn auc_bruteforce(scores: &[f64], labels: &[bool]) -> f64 {
    let mut credit = 0.0;
    let mut pairs = 0.0;
    for (sp, _) in scores.iter().zip(labels).filter(|(_, l)| **l) {
        for (sn, _) in scores.iter().zip(labels).filter(|(_, l)| !**l) {
            pairs += 1.0;
            if sp > sn {
                credit += 1.0;
            } else if sp == sn {
                credit += 0.5;
            }
        }
    }
    credit / pairs
}

/// Largest violation of the three KKT cases on the training rows.
pub fn max_kkt_violation(model: &SvmModel, x: &[Vec<f64>], labels: &[bool]) -> f64 {
    let alpha = model.alphas(x.len());
    let mut worst: f64 = 0.0;
    for ((row, &label), a) in x.iter().zip(labels).zip(alpha) {
        let y = if label { 1.0 } else { -1.0 };
        let yf = y * svm_score(model, row).unwrap();
        let v = if a == 0.0 {
            1.0 - yf
        } else if a == model.c {
            yf - 1.0
        } else {
            (yf - 1.0).abs()
        };
        worst = worst.max(v);
    }
    worst
}

pub struct SvmInstance {
    pub x: Vec<Vec<f64>>,
    pub labels: Vec<bool>,
    pub kernel: KernelSpec,
    pub c: f64,
}

/// Random instance with `2 <= N <= max_n`, `1 <= L <= max_l`, both classes,
/// cycling through linear, polynomial and RBF kernels by `index`.
pub fn random_svm_instance(rng: &mut Xoshiro256, index: usize, max_n: usize, max_l: usize) -> SvmInstance {
    let n = 2 + rng.below(max_n - 1);
    let l = 1 + rng.below(max_l);
    let x: Vec<Vec<f64>> = (0..n).map(|_| (0..l).map(|_| rng.gaussian()).collect()).collect();
    let mut labels: Vec<bool> = (0..n).map(|_| rng.next_f64() < 0.5).collect();
    labels[0] = true;
    labels[1] = false;
    rng.shuffle(&mut labels);
    let gamma = if rng.next_f64() < 0.3 { None } else { Some(rng.uniform(0.1, 2.0)) };
    let kernel = match index % 3 {
        0 => KernelSpec::linear(),
        1 => KernelSpec {
            degree: 1 + rng.below(3) as u32,
            coef0: rng.uniform(0.0, 2.0),
            gamma,
            ..KernelSpec::poly(3)
        },
        _ => KernelSpec::rbf(gamma),
    };
    let c = 10f64.powf(rng.uniform(-1.0, 1.0));
    SvmInstance { x, labels, kernel, c }
}

pub fn signs(labels: &[bool]) -> Vec<f64> {
    labels.iter().map(|&l| if l { 1.0 } else { -1.0 }).collect()
}

/// Central differences of the head loss, flattened as weights then biases.
pub fn numeric_grad(params: &HeadParams, x: &[Vec<f64>], y: &[bool], rows: &[usize], w: [f64; 2]) -> Vec<f64> {
    let h = 1e-4;
    let mut flat: Vec<f64> = params.weights.iter().copied().chain(params.bias).collect();
    let l = params.dim();
    let unflatten = |f: &[f64]| HeadParams {
        weights: f[..2 * l].to_vec(),
        bias: [f[2 * l], f[2 * l + 1]],
    };
    (0..flat.len())
        .map(|i| {
            let orig = flat[i];
            flat[i] = orig + h;
            let up = head_loss_and_grad(&unflatten(&flat), x, y, rows, w).0;
            flat[i] = orig - h;
            let down = head_loss_and_grad(&unflatten(&flat), x, y, rows, w).0;
            flat[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}
