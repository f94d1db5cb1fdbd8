//! Patient volumes, lesion annotations, their on-disk container, and the
//! synthetic phantom generator.

mod io;
mod phantom;
mod types;

use std::path::PathBuf;

pub use io::{read_dataset, read_patient, sequence_names, write_dataset, PatientMeta, ANNOTATION_FILE, META_FILE};
pub use phantom::{generate_patient, generate_phantom, PhantomSpec, SpacingChoice};
pub use types::{validate_record, BBox, LesionAnnotation, PatientRecord, SequenceSet, Volume3D};

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("validation error for patient {patient_id:?}: {msg}")]
    Validation { patient_id: String, msg: String },
    #[error("{path}: payload length mismatch (expected {expected} bytes, found {actual})")]
    PayloadLength { path: PathBuf, expected: u64, actual: u64 },
    #[error("{path}: malformed file: {msg}")]
    Format { path: PathBuf, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("phantom generation error: {0}")]
    Phantom(String),
}
