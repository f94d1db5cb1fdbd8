//! On-disk dataset container.
//!
//! ```text
//! <root>/<patient_id>/meta.json        patient_id, dims, spacing_xy, sequences, label
//! <root>/<patient_id>/<seq>.f32        little-endian f32, x fastest, then y, then z
//! <root>/<patient_id>/annotation.json  boxes keyed by slice index, slice_range, label
//! ```
//!
//! Sequence names are `pre`, `post1`, `post2`, ... in temporal order.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::types::{validate_record, LesionAnnotation, PatientRecord, SequenceSet, Volume3D};
use super::DatasetError;

pub const META_FILE: &str = "meta.json";
pub const ANNOTATION_FILE: &str = "annotation.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientMeta {
    pub patient_id: String,
    pub dims: [usize; 3],
    pub spacing_xy: [f64; 2],
    pub sequences: Vec<String>,
    pub label: bool,
}

pub fn sequence_names(n_posts: usize) -> Vec<String> {
    std::iter::once("pre".to_string())
        .chain((1..=n_posts).map(|i| format!("post{i}")))
        .collect()
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn encode_f32(values: &[f32]) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes
}

fn decode_f32(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect()
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), DatasetError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| DatasetError::Format {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    fs::write(path, text).map_err(io_err(path))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, DatasetError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| DatasetError::Format {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

/// Writes every record under `root`, one directory per patient.
///
/// All records are validated before anything is written.
pub fn write_dataset(dataset: &[PatientRecord], root: &Path) -> Result<(), DatasetError> {
    for record in dataset {
        validate_record(record)?;
    }
    fs::create_dir_all(root).map_err(io_err(root))?;
    for (seqs, ann) in dataset {
        write_patient(seqs, ann, root)?;
    }
    Ok(())
}

fn write_patient(seqs: &SequenceSet, ann: &LesionAnnotation, root: &Path) -> Result<(), DatasetError> {
    let dir = root.join(&seqs.patient_id);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let names = sequence_names(seqs.posts.len());
    let meta = PatientMeta {
        patient_id: seqs.patient_id.clone(),
        dims: seqs.dims(),
        spacing_xy: seqs.spacing_xy,
        sequences: names.clone(),
        label: ann.label,
    };
    write_json(&dir.join(META_FILE), &meta)?;
    for (name, volume) in names.iter().zip(std::iter::once(&seqs.pre).chain(&seqs.posts)) {
        let path = dir.join(format!("{name}.f32"));
        fs::write(&path, encode_f32(&volume.voxels)).map_err(io_err(&path))?;
    }
    write_json(&dir.join(ANNOTATION_FILE), ann)
}

/// Reads every patient directory under `root`, sorted by directory name.
pub fn read_dataset(root: &Path) -> Result<Vec<PatientRecord>, DatasetError> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)
        .map_err(io_err(root))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    dirs.iter().map(|dir| read_patient(dir)).collect()
}

pub fn read_patient(dir: &Path) -> Result<PatientRecord, DatasetError> {
    let meta_path = dir.join(META_FILE);
    let meta: PatientMeta = read_json(&meta_path)?;
    let header_fail = |msg: String| DatasetError::Validation {
        patient_id: meta.patient_id.clone(),
        msg,
    };
    if meta.dims.contains(&0) {
        return Err(header_fail(format!("dims must be positive, got {:?}", meta.dims)));
    }
    if meta.sequences.len() < 4 {
        return Err(header_fail(format!(
            "posts < 3 (sequences listed: {})",
            meta.sequences.len()
        )));
    }
    let expected_bytes = meta.dims.iter().product::<usize>() as u64 * 4;

    // Check every payload size before reading any of them.
    let paths: Vec<PathBuf> = meta
        .sequences
        .iter()
        .map(|name| dir.join(format!("{name}.f32")))
        .collect();
    for path in &paths {
        let len = fs::metadata(path).map_err(io_err(path))?.len();
        if len != expected_bytes {
            return Err(DatasetError::PayloadLength {
                path: path.clone(),
                expected: expected_bytes,
                actual: len,
            });
        }
    }
    let mut volumes = Vec::with_capacity(paths.len());
    for path in &paths {
        let bytes = fs::read(path).map_err(io_err(path))?;
        volumes.push(Volume3D {
            dims: meta.dims,
            voxels: decode_f32(&bytes),
        });
    }
    let pre = volumes.remove(0);
    let seqs = SequenceSet {
        patient_id: meta.patient_id.clone(),
        pre,
        posts: volumes,
        spacing_xy: meta.spacing_xy,
    };
    let ann: LesionAnnotation = read_json(&dir.join(ANNOTATION_FILE))?;
    if ann.label != meta.label {
        return Err(header_fail("label differs between meta.json and annotation.json".into()));
    }
    let record = (seqs, ann);
    validate_record(&record)?;
    Ok(record)
}
