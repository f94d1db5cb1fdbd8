//! Two-class linear softmax head trained by mini-batch SGD with momentum.

use serde::{Deserialize, Serialize};

use super::{ClassifierError, Standardizer};
use crate::rng::Xoshiro256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeadTrainConfig {
    pub lr: f64,
    pub momentum: f64,
    /// Multiplicative learning-rate decay applied every `step_size` iterations.
    pub gamma: f64,
    pub step_size: usize,
    pub max_iters: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Loss weight of the negative and positive class.
    pub class_weight: [f64; 2],
    /// Full-data loss is checked every `check_every` iterations; training
    /// stops once it moves by less than `min_loss_change`.
    pub check_every: usize,
    pub min_loss_change: f64,
}

impl Default for HeadTrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            momentum: 0.9,
            gamma: 0.96,
            step_size: 1000,
            max_iters: 200_000,
            batch_size: 32,
            seed: 0,
            class_weight: [1.0, 1.0],
            check_every: 100,
            min_loss_change: 1e-8,
        }
    }
}

impl HeadTrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(format!("{name} must be positive, got {v}"))
            }
        };
        positive("lr", self.lr)?;
        positive("gamma", self.gamma)?;
        positive("class_weight[0]", self.class_weight[0])?;
        positive("class_weight[1]", self.class_weight[1])?;
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if self.gamma > 1.0 {
            return Err(format!("gamma must not exceed 1, got {}", self.gamma));
        }
        if self.step_size == 0 || self.max_iters == 0 || self.batch_size == 0 || self.check_every == 0 {
            return Err("step_size, max_iters, batch_size and check_every must be positive".into());
        }
        if !(self.min_loss_change >= 0.0) {
            return Err("min_loss_change must be non-negative".into());
        }
        Ok(())
    }

    /// Learning rate in effect at iteration `iter` (0-based).
    pub fn lr_at(&self, iter: usize) -> f64 {
        self.lr * self.gamma.powi((iter / self.step_size) as i32)
    }
}

/// Weights and biases of the 2-class layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadParams {
    /// `[class][feature]`, row-major `2 x L`.
    pub weights: Vec<f64>,
    pub bias: [f64; 2],
}

impl HeadParams {
    pub fn zeros(dim: usize) -> Self {
        Self {
            weights: vec![0.0; 2 * dim],
            bias: [0.0; 2],
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len() / 2
    }

    pub fn logits(&self, x: &[f64]) -> [f64; 2] {
        let l = self.dim();
        let dot = |row: &[f64]| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        [dot(&self.weights[..l]) + self.bias[0], dot(&self.weights[l..]) + self.bias[1]]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearHead {
    pub params: HeadParams,
    pub standardizer: Standardizer,
    pub config: HeadTrainConfig,
    pub iterations: usize,
    pub final_loss: f64,
}

/// `log(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Class-weighted mean softmax cross-entropy over `rows` and its gradient.
pub fn head_loss_and_grad(
    params: &HeadParams,
    x: &[Vec<f64>],
    labels: &[bool],
    rows: &[usize],
    class_weight: [f64; 2],
) -> (f64, HeadParams) {
    let l = params.dim();
    let mut grad = HeadParams::zeros(l);
    let mut loss = 0.0;
    let mut total_weight = 0.0;
    for &r in rows {
        let class = usize::from(labels[r]);
        let w = class_weight[class];
        let z = params.logits(&x[r]);
        let margin = z[1 - class] - z[class];
        loss += w * softplus(margin);
        total_weight += w;
        // d loss / d z_other = p_other, d loss / d z_class = -p_other
        let p_other = sigmoid(margin);
        for (k, sign) in [(class, -1.0), (1 - class, 1.0)] {
            let coef = w * sign * p_other;
            grad.bias[k] += coef;
            for (g, v) in grad.weights[k * l..(k + 1) * l].iter_mut().zip(&x[r]) {
                *g += coef * v;
            }
        }
    }
    let scale = if total_weight > 0.0 { 1.0 / total_weight } else { 0.0 };
    grad.weights.iter_mut().for_each(|g| *g *= scale);
    grad.bias.iter_mut().for_each(|g| *g *= scale);
    (loss * scale, grad)
}

pub fn head_train(features: &[Vec<f64>], labels: &[bool], config: &HeadTrainConfig) -> Result<LinearHead, ClassifierError> {
    config.validate().map_err(ClassifierError::Config)?;
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
    if features.iter().any(|r| r.len() != dim) {
        return Err(ClassifierError::Dimension { expected: dim, got: 0 });
    }
    if features.iter().flatten().any(|v| !v.is_finite()) {
        return Err(ClassifierError::NonFinite);
    }
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 || positives == labels.len() {
        return Err(ClassifierError::SingleClass);
    }

    let standardizer = Standardizer::fit(features);
    let x = standardizer.transform_all(features);
    let n = x.len();
    let mut rng = Xoshiro256::new(config.seed);
    let init_scale = 1.0 / (dim as f64).sqrt();
    let mut params = HeadParams {
        weights: (0..2 * dim).map(|_| rng.gaussian() * init_scale).collect(),
        bias: [0.0; 2],
    };
    let mut velocity = HeadParams::zeros(dim);
    let all: Vec<usize> = (0..n).collect();
    let mut order = all.clone();
    rng.shuffle(&mut order);
    let mut cursor = 0;
    let mut batch = Vec::with_capacity(config.batch_size);
    let mut last_loss = head_loss_and_grad(&params, &x, labels, &all, config.class_weight).0;
    let mut iterations = 0;

    while iterations < config.max_iters {
        batch.clear();
        while batch.len() < config.batch_size {
            if cursor == n {
                rng.shuffle(&mut order);
                cursor = 0;
            }
            batch.push(order[cursor]);
            cursor += 1;
        }
        let (_, grad) = head_loss_and_grad(&params, &x, labels, &batch, config.class_weight);
        let lr = config.lr_at(iterations);
        for (v, g) in velocity.weights.iter_mut().zip(&grad.weights) {
            *v = config.momentum * *v - lr * g;
        }
        for (v, g) in velocity.bias.iter_mut().zip(&grad.bias) {
            *v = config.momentum * *v - lr * g;
        }
        for (p, v) in params.weights.iter_mut().zip(&velocity.weights) {
            *p += v;
        }
        for (p, v) in params.bias.iter_mut().zip(&velocity.bias) {
            *p += v;
        }
        iterations += 1;

        if iterations % config.check_every == 0 {
            let loss = head_loss_and_grad(&params, &x, labels, &all, config.class_weight).0;
            let change = (last_loss - loss).abs();
            last_loss = loss;
            if change < config.min_loss_change {
                break;
            }
        }
    }
    let final_loss = head_loss_and_grad(&params, &x, labels, &all, config.class_weight).0;
    Ok(LinearHead {
        params,
        standardizer,
        config: *config,
        iterations,
        final_loss,
    })
}

/// Positive-class softmax probability.
pub fn head_score(head: &LinearHead, x: &[f64]) -> Result<f64, ClassifierError> {
    if x.len() != head.params.dim() {
        return Err(ClassifierError::Dimension {
            expected: head.params.dim(),
            got: x.len(),
        });
    }
    let z = head.params.logits(&head.standardizer.transform(x));
    Ok(sigmoid(z[1] - z[0]))
}
