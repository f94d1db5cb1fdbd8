//! Kernel SVM (SMO) and linear softmax head on deep features.

mod head;
mod io;
mod kernel;
mod standardize;
mod svm;

pub use head::{head_loss_and_grad, head_score, head_train, HeadParams, HeadTrainConfig, LinearHead};
pub use io::{read_svm, write_svm, SVM_FORMAT, SVM_MAGIC};
pub use kernel::{kernel_eval, KernelKind, KernelSpec};
pub use standardize::Standardizer;
pub use svm::{svm_score, svm_train, SmoDiagnostics, SvmConfig, SvmModel, DEFAULT_MAX_ITER};

#[derive(Debug, thiserror::Error)]
pub enum ClassifierError {
    #[error("training data must contain both classes")]
    SingleClass,
    #[error("training data is empty")]
    Empty,
    #[error("non-finite feature value")]
    NonFinite,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid classifier config: {0}")]
    Config(String),
    #[error("SMO did not converge: {0}")]
    NoConvergence(SmoDiagnostics),
    #[error("model file {path}: {msg}")]
    Format { path: std::path::PathBuf, msg: String },
}

/// A trained classifier of either family.
#[derive(Debug, Clone, PartialEq)]
pub enum Classifier {
    Svm(SvmModel),
    Head(LinearHead),
}

impl Classifier {
    /// Ranking score; larger means more likely positive.
    pub fn score(&self, x: &[f64]) -> Result<f64, ClassifierError> {
        match self {
            Self::Svm(m) => svm_score(m, x),
            Self::Head(h) => head_score(h, x),
        }
    }
}
