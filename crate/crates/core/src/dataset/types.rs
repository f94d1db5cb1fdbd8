use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::DatasetError;

/// A dense 3D volume, row-major with x varying fastest:
/// `index = x + nx * (y + ny * z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume3D {
    pub dims: [usize; 3],
    pub voxels: Vec<f32>,
}

impl Volume3D {
    pub fn new(dims: [usize; 3], voxels: Vec<f32>) -> Result<Self, DatasetError> {
        let volume = Self { dims, voxels };
        volume
            .check("volume")
            .map_err(|msg| DatasetError::Validation {
                patient_id: String::new(),
                msg,
            })?;
        Ok(volume)
    }

    pub fn zeros(dims: [usize; 3]) -> Self {
        Self {
            dims,
            voxels: vec![0.0; dims[0] * dims[1] * dims[2]],
        }
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    /// Borrow the `z`-th axial slice (nx * ny values, x fastest).
    pub fn slice(&self, z: usize) -> &[f32] {
        let plane = self.dims[0] * self.dims[1];
        &self.voxels[z * plane..(z + 1) * plane]
    }

    fn check(&self, field: &str) -> Result<(), String> {
        if self.dims.contains(&0) {
            return Err(format!("{field}: dims must be positive, got {:?}", self.dims));
        }
        if self.voxels.len() != self.len() {
            return Err(format!(
                "{field}: {} voxels for dims {:?}",
                self.voxels.len(),
                self.dims
            ));
        }
        if let Some(i) = self.voxels.iter().position(|v| !v.is_finite()) {
            return Err(format!("{field}: non-finite voxel at index {i}"));
        }
        Ok(())
    }
}

/// One patient's DCE-MRI study: pre-contrast volume plus temporally ordered
/// post-contrast volumes, all sharing dims and in-plane spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSet {
    pub patient_id: String,
    pub pre: Volume3D,
    pub posts: Vec<Volume3D>,
    /// Millimetres per pixel along x and y.
    pub spacing_xy: [f64; 2],
}

impl SequenceSet {
    pub fn dims(&self) -> [usize; 3] {
        self.pre.dims
    }

    pub fn slice_count(&self) -> usize {
        self.pre.dims[2]
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let fail = |msg: String| DatasetError::Validation {
            patient_id: self.patient_id.clone(),
            msg,
        };
        if self.patient_id.is_empty()
            || self
                .patient_id
                .chars()
                .any(|c| c == '/' || c == '\\' || c.is_control())
            || self.patient_id == "."
            || self.patient_id == ".."
        {
            return Err(fail(format!("patient_id: invalid value {:?}", self.patient_id)));
        }
        if self.posts.len() < 3 {
            return Err(fail(format!("posts < 3 (got {})", self.posts.len())));
        }
        if !self.spacing_xy.iter().all(|s| s.is_finite() && *s > 0.0) {
            return Err(fail(format!("spacing_xy: must be positive, got {:?}", self.spacing_xy)));
        }
        self.pre.check("pre").map_err(fail)?;
        for (i, post) in self.posts.iter().enumerate() {
            post.check(&format!("posts[{i}]")).map_err(fail)?;
            if post.dims != self.pre.dims {
                return Err(fail(format!(
                    "posts[{i}]: dims {:?} differ from pre {:?}",
                    post.dims, self.pre.dims
                )));
            }
        }
        Ok(())
    }
}

/// Half-open pixel box: covers `x_min <= x < x_max`, `y_min <= y < y_max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "[usize; 4]", into = "[usize; 4]")]
pub struct BBox {
    pub x_min: usize,
    pub y_min: usize,
    pub x_max: usize,
    pub y_max: usize,
}

impl BBox {
    pub fn new(x_min: usize, y_min: usize, x_max: usize, y_max: usize) -> Self {
        Self {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    pub fn area(&self) -> usize {
        self.x_max.saturating_sub(self.x_min) * self.y_max.saturating_sub(self.y_min)
    }

    /// Box centre, midpoint rounded down.
    pub fn center(&self) -> (usize, usize) {
        ((self.x_min + self.x_max) / 2, (self.y_min + self.y_max) / 2)
    }
}

impl From<[usize; 4]> for BBox {
    fn from(v: [usize; 4]) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [usize; 4] {
    fn from(b: BBox) -> Self {
        [b.x_min, b.y_min, b.x_max, b.y_max]
    }
}

/// Reader annotation: one 2D box per lesion slice, the slice range that
/// encloses the lesion, and the upstaging label (true = occult invasive).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LesionAnnotation {
    pub patient_id: String,
    pub boxes: BTreeMap<usize, BBox>,
    pub slice_range: (usize, usize),
    pub label: bool,
}

impl LesionAnnotation {
    /// Checks the annotation against the image extent `dims`.
    pub fn validate(&self, dims: [usize; 3]) -> Result<(), DatasetError> {
        let fail = |msg: String| DatasetError::Validation {
            patient_id: self.patient_id.clone(),
            msg,
        };
        let (first, last) = self.slice_range;
        if first > last {
            return Err(fail(format!("slice_range: first {first} > last {last}")));
        }
        if last >= dims[2] {
            return Err(fail(format!("slice_range: last {last} outside [0, {})", dims[2])));
        }
        for (&z, b) in &self.boxes {
            if z >= dims[2] {
                return Err(fail(format!("boxes: slice {z} outside [0, {})", dims[2])));
            }
            if z < first || z > last {
                return Err(fail(format!(
                    "boxes: slice {z} outside slice_range ({first}, {last})"
                )));
            }
            if b.x_max <= b.x_min || b.y_max <= b.y_min {
                return Err(fail(format!("boxes[{z}]: empty box {:?}", <[usize; 4]>::from(*b))));
            }
            if b.x_max > dims[0] || b.y_max > dims[1] {
                return Err(fail(format!(
                    "boxes[{z}]: box {:?} exceeds image extent {}x{}",
                    <[usize; 4]>::from(*b),
                    dims[0],
                    dims[1]
                )));
            }
        }
        Ok(())
    }
}

/// A patient record as stored on disk.
pub type PatientRecord = (SequenceSet, LesionAnnotation);

pub fn validate_record((seqs, ann): &PatientRecord) -> Result<(), DatasetError> {
    seqs.validate()?;
    if ann.patient_id != seqs.patient_id {
        return Err(DatasetError::Validation {
            patient_id: seqs.patient_id.clone(),
            msg: format!("annotation patient_id {:?} does not match", ann.patient_id),
        });
    }
    ann.validate(seqs.dims())
}
