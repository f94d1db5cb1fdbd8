//! SVM model container.
//!
//! ```text
//! 8 bytes   magic "DFUPSVM\0"
//! u32 LE    header length H
//! H bytes   JSON header (format tag, version, kernel, C, bias, standardizer, dims)
//! f64 LE    support vectors, n_support x dim, row-major
//! f64 LE    dual coefficients, n_support
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ClassifierError, KernelSpec, Standardizer, SvmModel};

pub const SVM_MAGIC: &[u8; 8] = b"DFUPSVM\0";
pub const SVM_FORMAT: &str = "dfup-svm";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    kernel: KernelSpec,
    c: f64,
    bias: f64,
    standardizer: Standardizer,
    n_support: usize,
    dim: usize,
    support_indices: Vec<usize>,
    iterations: usize,
    objective: f64,
}

fn format_err(path: &Path, msg: impl ToString) -> ClassifierError {
    ClassifierError::Format {
        path: path.to_path_buf(),
        msg: msg.to_string(),
    }
}

pub fn write_svm(model: &SvmModel, path: &Path) -> Result<(), ClassifierError> {
    let header = Header {
        format: SVM_FORMAT.into(),
        version: VERSION,
        kernel: model.kernel,
        c: model.c,
        bias: model.bias,
        standardizer: model.standardizer.clone(),
        n_support: model.support_vectors.len(),
        dim: model.dim(),
        support_indices: model.support_indices.clone(),
        iterations: model.iterations,
        objective: model.objective,
    };
    let json = serde_json::to_vec(&header).map_err(|e| format_err(path, e))?;
    let mut bytes = Vec::with_capacity(12 + json.len() + 8 * header.n_support * (header.dim + 1));
    bytes.extend_from_slice(SVM_MAGIC);
    bytes.extend_from_slice(&(json.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&json);
    for v in model.support_vectors.iter().flatten().chain(&model.dual_coefs) {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, bytes).map_err(|e| format_err(path, e))
}

pub fn read_svm(path: &Path) -> Result<SvmModel, ClassifierError> {
    let bytes = std::fs::read(path).map_err(|e| format_err(path, e))?;
    if bytes.len() < 12 || &bytes[..8] != SVM_MAGIC {
        return Err(format_err(path, "not an SVM model file"));
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = 12 + header_len;
    if bytes.len() < body {
        return Err(format_err(path, "truncated header"));
    }
    let header: Header = serde_json::from_slice(&bytes[12..body]).map_err(|e| format_err(path, e))?;
    if header.format != SVM_FORMAT || header.version != VERSION {
        return Err(format_err(path, format!("unsupported format {} v{}", header.format, header.version)));
    }
    if header.standardizer.dim() != header.dim || header.support_indices.len() != header.n_support {
        return Err(format_err(path, "inconsistent header dimensions"));
    }
    let expected = header.n_support * (header.dim + 1) * 8;
    if bytes.len() - body != expected {
        return Err(format_err(
            path,
            format!("payload length mismatch: expected {expected} bytes, found {}", bytes.len() - body),
        ));
    }
    let values: Vec<f64> = bytes[body..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let (svs, coefs) = values.split_at(header.n_support * header.dim);
    Ok(SvmModel {
        support_vectors: svs.chunks(header.dim.max(1)).map(<[f64]>::to_vec).collect(),
        dual_coefs: coefs.to_vec(),
        support_indices: header.support_indices,
        bias: header.bias,
        kernel: header.kernel,
        c: header.c,
        standardizer: header.standardizer,
        iterations: header.iterations,
        objective: header.objective,
    })
}
