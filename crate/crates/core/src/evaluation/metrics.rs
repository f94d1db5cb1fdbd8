use serde::{Deserialize, Serialize};

use super::EvaluationError;
use crate::rng::Xoshiro256;

/// Mean of a patient's patch scores.
pub fn aggregate_patient(scores: &[f64]) -> Result<f64, EvaluationError> {
    if scores.is_empty() {
        return Err(EvaluationError::Empty("patient has no patch scores".into()));
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

fn class_counts(labels: &[bool]) -> (usize, usize) {
    let pos = labels.iter().filter(|&&l| l).count();
    (pos, labels.len() - pos)
}

/// Mann-Whitney AUC: `(#{pos > neg} + ½ #{pos == neg}) / (n_pos n_neg)`.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64, EvaluationError> {
    if scores.len() != labels.len() {
        return Err(EvaluationError::Invalid(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(EvaluationError::Invalid("NaN score".into()));
    }
    let (n_pos, n_neg) = class_counts(labels);
    if n_pos == 0 || n_neg == 0 {
        return Err(EvaluationError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Twice the credit, so every count stays an integer.
    let mut credit2: u64 = 0;
    let mut neg_below: u64 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        let (mut pos, mut neg) = (0u64, 0u64);
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            if labels[order[end]] {
                pos += 1;
            } else {
                neg += 1;
            }
            end += 1;
        }
        credit2 += 2 * pos * neg_below + pos * neg;
        neg_below += neg;
        start = end;
    }
    Ok(credit2 as f64 / (2 * n_pos * n_neg) as f64)
}

/// AUC of every resample, in draw order. Patients are drawn with
/// replacement; a resample missing either class is redrawn.
pub fn bootstrap_distribution(
    scores: &[f64],
    labels: &[bool],
    n_resamples: usize,
    seed: u64,
) -> Result<Vec<f64>, EvaluationError> {
    auc(scores, labels)?;
    let n = scores.len();
    let mut rng = Xoshiro256::new(seed);
    let mut s = vec![0.0; n];
    let mut l = vec![false; n];
    let mut out = Vec::with_capacity(n_resamples);
    while out.len() < n_resamples {
        for i in 0..n {
            let j = rng.below(n);
            s[i] = scores[j];
            l[i] = labels[j];
        }
        let (pos, neg) = class_counts(&l);
        if pos == 0 || neg == 0 {
            continue;
        }
        out.push(auc(&s, &l)?);
    }
    Ok(out)
}

/// Linearly interpolated quantile of `sorted` (ascending) at `q` in `[0, 1]`.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Central percentile interval at `level` of a sample.
pub fn percentile_interval(sample: &[f64], level: f64) -> (f64, f64) {
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    (quantile(&sorted, tail), quantile(&sorted, 1.0 - tail))
}

pub const MIN_RESAMPLES: usize = 100;

/// Percentile bootstrap interval of the AUC at `level`.
pub fn bootstrap_ci_level(
    scores: &[f64],
    labels: &[bool],
    n_resamples: usize,
    seed: u64,
    level: f64,
) -> Result<(f64, f64), EvaluationError> {
    if n_resamples < MIN_RESAMPLES {
        return Err(EvaluationError::Invalid(format!(
            "n_resamples must be at least {MIN_RESAMPLES}, got {n_resamples}"
        )));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(EvaluationError::Invalid(format!("confidence level must be in (0, 1), got {level}")));
    }
    let dist = bootstrap_distribution(scores, labels, n_resamples, seed)?;
    Ok(percentile_interval(&dist, level))
}

/// 95% percentile bootstrap interval of the AUC.
pub fn bootstrap_ci(scores: &[f64], labels: &[bool], n_resamples: usize, seed: u64) -> Result<(f64, f64), EvaluationError> {
    bootstrap_ci_level(scores, labels, n_resamples, seed, 0.95)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureAuc {
    pub feature_index: usize,
    pub auc: f64,
}

/// AUC of each raw column used as a score, sorted by AUC descending (ties by
/// index ascending).
pub fn per_feature_auc(rows: &[Vec<f64>], labels: &[bool]) -> Result<Vec<FeatureAuc>, EvaluationError> {
    let dim = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != dim) {
        return Err(EvaluationError::Invalid("ragged feature matrix".into()));
    }
    let mut out = (0..dim)
        .map(|j| {
            let column: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            Ok(FeatureAuc {
                feature_index: j,
                auc: auc(&column, labels)?,
            })
        })
        .collect::<Result<Vec<_>, EvaluationError>>()?;
    out.sort_by(|a, b| b.auc.total_cmp(&a.auc).then(a.feature_index.cmp(&b.feature_index)));
    Ok(out)
}
