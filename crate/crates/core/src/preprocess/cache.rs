//! Optional on-disk patch cache.
//!
//! ```text
//! <cache>/manifest.json                   { config_hash, seed }
//! <cache>/<patient_id>/index.json         one entry per patch, in extraction order
//! <cache>/<patient_id>/<slice>_<tag>.f32  interleaved little-endian f32, tag = center | rot<k>
//! ```
//!
//! Opening a cache whose manifest disagrees with the current config hash or
//! seed wipes it.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{AugmentationTag, Patch, PreprocessConfig, PreprocessError};
use crate::fingerprint;

pub const CACHE_MANIFEST: &str = "manifest.json";
const INDEX_FILE: &str = "index.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    config_hash: String,
    seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Entry {
    file: String,
    slice_index: usize,
    tag: AugmentationTag,
    label: bool,
    size: usize,
}

#[derive(Debug)]
pub struct PatchCache {
    root: PathBuf,
    invalidated: bool,
}

fn cache_err(path: &Path, msg: impl ToString) -> PreprocessError {
    PreprocessError::Cache {
        path: path.to_path_buf(),
        msg: msg.to_string(),
    }
}

impl PatchCache {
    pub fn open(root: &Path, config: &PreprocessConfig, seed: u64) -> Result<Self, PreprocessError> {
        let manifest = Manifest {
            config_hash: fingerprint(config),
            seed,
        };
        let manifest_path = root.join(CACHE_MANIFEST);
        let mut invalidated = false;
        if manifest_path.exists() {
            let text = fs::read_to_string(&manifest_path).map_err(|e| cache_err(&manifest_path, e))?;
            let existing: Manifest = serde_json::from_str(&text).map_err(|e| cache_err(&manifest_path, e))?;
            if existing != manifest {
                fs::remove_dir_all(root).map_err(|e| cache_err(root, e))?;
                invalidated = true;
            }
        } else if root.exists() && fs::read_dir(root).map_err(|e| cache_err(root, e))?.next().is_some() {
            return Err(cache_err(root, "directory is not empty and has no cache manifest"));
        }
        fs::create_dir_all(root).map_err(|e| cache_err(root, e))?;
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| cache_err(&manifest_path, e))?;
        fs::write(&manifest_path, text).map_err(|e| cache_err(&manifest_path, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            invalidated,
        })
    }

    /// Whether `open` discarded a cache built with a different config or seed.
    pub fn invalidated(&self) -> bool {
        self.invalidated
    }

    pub fn store(&self, patient_id: &str, patches: &[Patch]) -> Result<(), PreprocessError> {
        let dir = self.root.join(patient_id);
        fs::create_dir_all(&dir).map_err(|e| cache_err(&dir, e))?;
        let mut entries = Vec::with_capacity(patches.len());
        let mut rotation = 0;
        let mut last_slice = None;
        for patch in patches {
            if last_slice != Some(patch.slice_index) {
                rotation = 0;
                last_slice = Some(patch.slice_index);
            }
            let tag = match patch.tag {
                AugmentationTag::Center => "center".to_string(),
                AugmentationTag::Rotation { .. } => {
                    rotation += 1;
                    format!("rot{rotation}")
                }
            };
            let file = format!("{}_{tag}.f32", patch.slice_index);
            let bytes: Vec<u8> = patch.data.iter().flat_map(|v| v.to_le_bytes()).collect();
            let path = dir.join(&file);
            fs::write(&path, bytes).map_err(|e| cache_err(&path, e))?;
            entries.push(Entry {
                file,
                slice_index: patch.slice_index,
                tag: patch.tag,
                label: patch.label,
                size: patch.size,
            });
        }
        let index = dir.join(INDEX_FILE);
        let text = serde_json::to_string_pretty(&entries).map_err(|e| cache_err(&index, e))?;
        fs::write(&index, text).map_err(|e| cache_err(&index, e))
    }

    /// Cached patches for a patient, or `None` when absent.
    pub fn load(&self, patient_id: &str) -> Result<Option<Vec<Patch>>, PreprocessError> {
        let dir = self.root.join(patient_id);
        let index = dir.join(INDEX_FILE);
        if !index.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&index).map_err(|e| cache_err(&index, e))?;
        let entries: Vec<Entry> = serde_json::from_str(&text).map_err(|e| cache_err(&index, e))?;
        let mut patches = Vec::with_capacity(entries.len());
        for entry in entries {
            let path = dir.join(&entry.file);
            let bytes = fs::read(&path).map_err(|e| cache_err(&path, e))?;
            if bytes.len() != entry.size * entry.size * 3 * 4 {
                return Err(cache_err(&path, "payload length mismatch"));
            }
            let data = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            patches.push(Patch {
                size: entry.size,
                data,
                patient_id: patient_id.to_string(),
                slice_index: entry.slice_index,
                tag: entry.tag,
                label: entry.label,
            });
        }
        Ok(Some(patches))
    }
}
