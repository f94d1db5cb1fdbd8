//! Soft-margin kernel SVM trained by SMO.
//!
//! Dual (minimisation form): `min ½ αᵀQα − eᵀα` s.t. `yᵀα = 0`, `0 ≤ α ≤ C`,
//! with `Q_ij = y_i y_j K(x_i, x_j)`. Each step moves a pair along the
//! feasible direction `(+y_i, −y_j)`: `i` is the maximal violator in `I_up`,
//! `j` the `I_low` partner with the largest second-order decrease. Training
//! stops once the maximal violation gap is at most `tol`.

use std::collections::HashMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ClassifierError, KernelSpec, Standardizer};

pub const DEFAULT_MAX_ITER: usize = 1_000_000;
const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmConfig {
    pub kernel: KernelSpec,
    pub c: f64,
    /// KKT tolerance on `y·f(x)`.
    pub tol: f64,
    pub max_iter: usize,
    /// Kernel row cache budget.
    pub cache_mb: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            kernel: KernelSpec::default(),
            c: 1.0,
            tol: 1e-3,
            max_iter: DEFAULT_MAX_ITER,
            cache_mb: 256,
        }
    }
}

impl SvmConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.kernel.validate()?;
        if !(self.c.is_finite() && self.c > 0.0) {
            return Err(format!("C must be positive, got {}", self.c));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(format!("tol must be positive, got {}", self.tol));
        }
        if self.max_iter == 0 {
            return Err("max_iter must be positive".into());
        }
        Ok(())
    }
}

/// Solver state when the iteration cap was hit.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoDiagnostics {
    pub iterations: usize,
    /// `max_{I_up} −y G − min_{I_low} −y G`; zero at optimum.
    pub gap: f64,
    pub objective: f64,
    pub n_support: usize,
}

impl fmt::Display for SmoDiagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} iterations, violation gap {:.3e}, dual objective {:.6}, {} support vectors",
            self.iterations, self.gap, self.objective, self.n_support
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    /// Standardised feature rows with `α > 0`.
    pub support_vectors: Vec<Vec<f64>>,
    /// `α_i y_i`, aligned with `support_vectors`.
    pub dual_coefs: Vec<f64>,
    /// Training row index of each support vector.
    pub support_indices: Vec<usize>,
    pub bias: f64,
    /// Gamma resolved against the training dimension.
    pub kernel: KernelSpec,
    pub c: f64,
    pub standardizer: Standardizer,
    pub iterations: usize,
    /// Dual objective in maximisation form, `Σα − ½ αᵀQα`.
    pub objective: f64,
}

impl SvmModel {
    pub fn dim(&self) -> usize {
        self.standardizer.dim()
    }

    /// Dual variables over all `n` training rows.
    pub fn alphas(&self, n: usize) -> Vec<f64> {
        let mut alpha = vec![0.0; n];
        for (&i, coef) in self.support_indices.iter().zip(&self.dual_coefs) {
            alpha[i] = coef.abs();
        }
        alpha
    }

    /// Decision value on an already standardised row.
    pub fn decision_standardized(&self, z: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.dual_coefs)
            .fold(self.bias, |acc, (sv, coef)| acc + coef * self.kernel.eval(sv, z))
    }
}

struct KernelRows<'a> {
    x: &'a [Vec<f64>],
    kernel: KernelSpec,
    rows: HashMap<usize, (u64, Vec<f64>)>,
    capacity: usize,
    clock: u64,
}

impl<'a> KernelRows<'a> {
    fn new(x: &'a [Vec<f64>], kernel: KernelSpec, cache_mb: usize) -> Self {
        let row_bytes = (x.len() * 8).max(1);
        let capacity = (cache_mb * (1 << 20) / row_bytes).max(2);
        Self {
            x,
            kernel,
            rows: HashMap::new(),
            capacity,
            clock: 0,
        }
    }

    fn row(&mut self, i: usize) -> &[f64] {
        self.clock += 1;
        let clock = self.clock;
        if !self.rows.contains_key(&i) {
            if self.rows.len() >= self.capacity {
                let oldest = *self.rows.iter().min_by_key(|(_, (t, _))| *t).map(|(k, _)| k).unwrap();
                self.rows.remove(&oldest);
            }
            let xi = &self.x[i];
            let kernel = self.kernel;
            let row: Vec<f64> = self.x.par_iter().map(|xj| kernel.eval(xi, xj)).collect();
            self.rows.insert(i, (clock, row));
        }
        let entry = self.rows.get_mut(&i).unwrap();
        entry.0 = clock;
        &entry.1
    }
}

fn check_inputs(features: &[Vec<f64>], labels: &[bool]) -> Result<usize, ClassifierError> {
    if features.len() != labels.len() {
        return Err(ClassifierError::Dimension {
            expected: features.len(),
            got: labels.len(),
        });
    }
    let dim = features.first().map_or(0, Vec::len);
    if dim == 0 {
        return Err(ClassifierError::Empty);
    }
    for row in features {
        if row.len() != dim {
            return Err(ClassifierError::Dimension {
                expected: dim,
                got: row.len(),
            });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(ClassifierError::NonFinite);
        }
    }
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 || positives == labels.len() {
        return Err(ClassifierError::SingleClass);
    }
    Ok(dim)
}

/// Train on raw features; rows are standardised with statistics fit here.
pub fn svm_train(features: &[Vec<f64>], labels: &[bool], config: &SvmConfig) -> Result<SvmModel, ClassifierError> {
    config.validate().map_err(ClassifierError::Config)?;
    let dim = check_inputs(features, labels)?;
    let standardizer = Standardizer::fit(features);
    let x = standardizer.transform_all(features);
    let kernel = config.kernel.resolved(dim);
    let c = config.c;
    let n = x.len();
    let y: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { -1.0 }).collect();
    let diag: Vec<f64> = x.iter().map(|xi| kernel.eval(xi, xi)).collect();

    let mut cache = KernelRows::new(&x, kernel, config.cache_mb);
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let in_up = |a: f64, yi: f64| (yi > 0.0 && a < c) || (yi < 0.0 && a > 0.0);
    let in_low = |a: f64, yi: f64| (yi > 0.0 && a > 0.0) || (yi < 0.0 && a < c);

    let mut iterations = 0;
    loop {
        let mut up = (f64::NEG_INFINITY, usize::MAX);
        let mut low = (f64::INFINITY, usize::MAX);
        for t in 0..n {
            let v = -y[t] * grad[t];
            if in_up(alpha[t], y[t]) && v > up.0 {
                up = (v, t);
            }
            if in_low(alpha[t], y[t]) && v < low.0 {
                low = (v, t);
            }
        }
        let gap = up.0 - low.0;
        if gap <= config.tol {
            break;
        }
        if iterations >= config.max_iter {
            let objective = dual_objective(&alpha, &grad);
            return Err(ClassifierError::NoConvergence(SmoDiagnostics {
                iterations,
                gap,
                objective,
                n_support: alpha.iter().filter(|&&a| a > 0.0).count(),
            }));
        }
        iterations += 1;

        // Second-order choice of j: largest guaranteed objective decrease
        // among I_low members that violate with i.
        let i = up.1;
        let ki = cache.row(i).to_vec();
        let mut best = (f64::NEG_INFINITY, low.1);
        for t in 0..n {
            let b = up.0 + y[t] * grad[t];
            if b > 0.0 && in_low(alpha[t], y[t]) {
                let a = (diag[i] + diag[t] - 2.0 * ki[t]).max(TAU);
                if b * b / a > best.0 {
                    best = (b * b / a, t);
                }
            }
        }
        let j = best.1;
        let kj = cache.row(j);
        let curvature = (diag[i] + diag[j] - 2.0 * ki[j]).max(TAU);
        let limit_i = if y[i] > 0.0 { c - alpha[i] } else { alpha[i] };
        let limit_j = if y[j] > 0.0 { alpha[j] } else { c - alpha[j] };
        let step = (up.0 + y[j] * grad[j]) / curvature;
        let t = step.min(limit_i).min(limit_j);

        alpha[i] = if t == limit_i {
            if y[i] > 0.0 { c } else { 0.0 }
        } else {
            alpha[i] + y[i] * t
        };
        alpha[j] = if t == limit_j {
            if y[j] > 0.0 { 0.0 } else { c }
        } else {
            alpha[j] - y[j] * t
        };
        for k in 0..n {
            grad[k] += y[k] * t * (ki[k] - kj[k]);
        }
    }

    let bias = intercept(&alpha, &grad, &y, c);
    let objective = dual_objective(&alpha, &grad);
    let support_indices: Vec<usize> = (0..n).filter(|&i| alpha[i] > 0.0).collect();
    Ok(SvmModel {
        support_vectors: support_indices.iter().map(|&i| x[i].clone()).collect(),
        dual_coefs: support_indices.iter().map(|&i| alpha[i] * y[i]).collect(),
        support_indices,
        bias,
        kernel,
        c,
        standardizer,
        iterations,
        objective,
    })
}

/// `Σα − ½ αᵀQα`, using `Qα = G + e`.
fn dual_objective(alpha: &[f64], grad: &[f64]) -> f64 {
    0.5 * alpha.iter().zip(grad).map(|(a, g)| a * (1.0 - g)).sum::<f64>()
}

/// Mean of `−y G` over free vectors, else the midpoint of the feasible range.
fn intercept(alpha: &[f64], grad: &[f64], y: &[f64], c: f64) -> f64 {
    let mut free_sum = 0.0;
    let mut free = 0usize;
    let mut lower = f64::NEG_INFINITY;
    let mut upper = f64::INFINITY;
    for t in 0..alpha.len() {
        let v = -y[t] * grad[t];
        if alpha[t] > 0.0 && alpha[t] < c {
            free_sum += v;
            free += 1;
        } else if (alpha[t] == 0.0) == (y[t] > 0.0) {
            lower = lower.max(v);
        } else {
            upper = upper.min(v);
        }
    }
    if free > 0 {
        free_sum / free as f64
    } else {
        match (lower.is_finite(), upper.is_finite()) {
            (true, true) => 0.5 * (lower + upper),
            (true, false) => lower,
            (false, true) => upper,
            (false, false) => 0.0,
        }
    }
}

/// Decision value `Σ α_i y_i K(sv_i, z) + b` on the standardised row.
pub fn svm_score(model: &SvmModel, x: &[f64]) -> Result<f64, ClassifierError> {
    if x.len() != model.dim() {
        return Err(ClassifierError::Dimension {
            expected: model.dim(),
            got: x.len(),
        });
    }
    Ok(model.decision_standardized(&model.standardizer.transform(x)))
}
