use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::EvaluationError;
use crate::rng::Xoshiro256;

/// Patient-to-fold assignment for grouped stratified k-fold CV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub assignments: BTreeMap<String, usize>,
}

impl FoldPlan {
    pub fn fold_of(&self, patient_id: &str) -> Option<usize> {
        self.assignments.get(patient_id).copied()
    }

    /// Patient ids per fold, each list sorted.
    pub fn folds(&self) -> Vec<Vec<String>> {
        let mut folds = vec![Vec::new(); self.k];
        for (id, &f) in &self.assignments {
            folds[f].push(id.clone());
        }
        folds
    }
}

/// Each class is shuffled separately (positives drawn first). The r-th
/// positive goes to fold `r mod k`; the r-th negative continues the rotation
/// at fold `(n_pos + r) mod k`, so fold sizes and per-class counts each
/// differ by at most one.
pub fn make_folds(patient_ids: &[String], labels: &[bool], k: usize, seed: u64) -> Result<FoldPlan, EvaluationError> {
    if patient_ids.len() != labels.len() {
        return Err(EvaluationError::Invalid(format!(
            "{} patients but {} labels",
            patient_ids.len(),
            labels.len()
        )));
    }
    if k == 0 || k > patient_ids.len() {
        return Err(EvaluationError::Folds(format!(
            "k = {k} is not in 1..={} patients",
            patient_ids.len()
        )));
    }
    let unique: BTreeSet<&String> = patient_ids.iter().collect();
    if unique.len() != patient_ids.len() {
        return Err(EvaluationError::Invalid("duplicate patient id".into()));
    }
    let mut pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
    let mut neg: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i]).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(EvaluationError::SingleClass);
    }
    let mut rng = Xoshiro256::new(seed);
    rng.shuffle(&mut pos);
    rng.shuffle(&mut neg);
    let n_pos = pos.len();
    let mut assignments = BTreeMap::new();
    for (r, &i) in pos.iter().chain(&neg).enumerate() {
        debug_assert!(r < n_pos || !labels[i]);
        assignments.insert(patient_ids[i].clone(), r % k);
    }
    Ok(FoldPlan { k, seed, assignments })
}
