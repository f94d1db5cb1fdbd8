//! Deep-feature prediction of DCIS upstaging from DCE-MRI.
//!
//! The pipeline runs in four stages, each in its own module:
//!
//! 1. [`dataset`]: patient volumes and lesion boxes on disk, plus a synthetic
//!    phantom generator with a planted texture signal.
//! 2. [`preprocess`]: resampling to the cohort's modal pixel spacing,
//!    three-channel subtraction images, eligible-slice selection, and
//!    centred plus rotation-augmented patches.
//! 3. [`features`]: layer-tapped CNN inference (built-in reference network or
//!    an ONNX model) with per-channel spatial max pooling.
//! 4. [`classifiers`] and [`evaluation`]: SMO kernel SVM and an SGD-trained
//!    linear head, scored under patient-grouped stratified k-fold
//!    cross-validation with bootstrap AUC intervals.
//!
//! [`cli`] wires the stages together from a JSON config; the `dfup` binary is
//! a thin wrapper around it. See the crate's `examples/` directory for one
//! runnable program per capability.

pub mod classifiers;
pub mod cli;
pub mod dataset;
pub mod evaluation;
pub mod features;
pub mod preprocess;
pub mod rng;

use sha2::{Digest, Sha256};

/// SHA-256 of a value's JSON serialisation, hex encoded.
pub fn fingerprint<T: serde::Serialize + ?Sized>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config types serialise to JSON");
    hex::encode(Sha256::digest(&bytes))
}

/// Writes `bytes` to a temporary sibling of `path`, then renames it over
/// `path`.
pub fn write_atomic(path: &std::path::Path, bytes: &[u8]) -> std::io::Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidInput, "path has no file name"))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
}
