use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::image::{resample_slice, resampled_extent, resize_bilinear, scale_box, Image2D};
use super::PreprocessError;
use crate::dataset::{LesionAnnotation, PatientRecord, SequenceSet, Volume3D};
use crate::rng::Xoshiro256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    Off,
    #[default]
    Minmax,
}

/// How training-set patches reach the feature extractor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FeatureInput {
    /// Bilinear resize straight to `model_input_size`.
    #[default]
    Resize,
    /// Resize to `train_resize`, then a random `model_input_size` crop.
    RandomCrop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub patch_size: usize,
    pub n_rotations: usize,
    /// Slices qualify when their box area is strictly greater than this.
    pub min_bbox_area: usize,
    pub model_input_size: usize,
    pub train_resize: usize,
    pub n_test_slices: usize,
    pub normalization: Normalization,
    pub feature_input: FeatureInput,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            patch_size: 120,
            n_rotations: 5,
            min_bbox_area: 100,
            model_input_size: 224,
            train_resize: 256,
            n_test_slices: 5,
            normalization: Normalization::Minmax,
            feature_input: FeatureInput::Resize,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<(), PreprocessError> {
        if self.patch_size == 0 || self.model_input_size == 0 || self.n_test_slices == 0 {
            return Err(PreprocessError::Config(
                "patch_size, model_input_size and n_test_slices must be positive".into(),
            ));
        }
        if self.model_input_size > self.train_resize {
            return Err(PreprocessError::Config(format!(
                "model_input_size {} exceeds train_resize {}",
                self.model_input_size, self.train_resize
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum AugmentationTag {
    Center,
    Rotation { angle_deg: f64 },
}

/// Square 3-channel image sample, stored interleaved (`(y * size + x) * 3 + c`).
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub size: usize,
    pub data: Vec<f32>,
    pub patient_id: String,
    pub slice_index: usize,
    pub tag: AugmentationTag,
    pub label: bool,
}

impl Patch {
    pub fn channel(&self, c: usize) -> Image2D {
        Image2D::new(self.size, self.size, self.data.iter().skip(c).step_by(3).copied().collect())
    }

    fn with_channels(&self, channels: [Image2D; 3]) -> Patch {
        let size = channels[0].width;
        let mut data = Vec::with_capacity(size * size * 3);
        for i in 0..size * size {
            for ch in &channels {
                data.push(ch.data[i]);
            }
        }
        Patch {
            size,
            data,
            ..self.clone()
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Three-channel subtraction volume: channel `c` is `posts[c] - pre`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubtractionVolume {
    pub patient_id: String,
    pub channels: [Volume3D; 3],
}

impl SubtractionVolume {
    pub fn dims(&self) -> [usize; 3] {
        self.channels[0].dims
    }

    fn slice_image(&self, c: usize, z: usize) -> Image2D {
        let [nx, ny, _] = self.dims();
        Image2D::new(nx, ny, self.channels[c].slice(z).to_vec())
    }
}

/// Modal in-plane spacing across the cohort; ties go to the finer spacing.
pub fn common_spacing(dataset: &[PatientRecord]) -> Result<[f64; 2], PreprocessError> {
    let mut counts: BTreeMap<[u64; 2], usize> = BTreeMap::new();
    for (seqs, _) in dataset {
        let key = [seqs.spacing_xy[0].to_bits(), seqs.spacing_xy[1].to_bits()];
        *counts.entry(key).or_default() += 1;
    }
    counts
        .into_iter()
        .map(|(k, n)| ([f64::from_bits(k[0]), f64::from_bits(k[1])], n))
        .max_by(|(sa, na), (sb, nb)| {
            na.cmp(nb)
                .then_with(|| (sb[0] * sb[1]).total_cmp(&(sa[0] * sa[1])))
                .then_with(|| sb[0].total_cmp(&sa[0]))
        })
        .map(|(s, _)| s)
        .ok_or(PreprocessError::EmptyDataset)
}

fn resample_volume(volume: &Volume3D, from: [f64; 2], to: [f64; 2]) -> Result<Volume3D, PreprocessError> {
    let [nx, ny, nz] = volume.dims;
    let (w, h) = resampled_extent(nx, ny, from, to);
    let mut voxels = Vec::with_capacity(w * h * nz);
    for z in 0..nz {
        let img = Image2D::new(nx, ny, volume.slice(z).to_vec());
        voxels.extend(resample_slice(&img, from, to)?.data);
    }
    Ok(Volume3D {
        dims: [w, h, nz],
        voxels,
    })
}

/// Brings a patient to the target spacing: every volume slice-by-slice and
/// every annotation box by the same factor.
pub fn resample_record(record: &PatientRecord, to: [f64; 2]) -> Result<PatientRecord, PreprocessError> {
    let (seqs, ann) = record;
    let from = seqs.spacing_xy;
    if from == to {
        return Ok(record.clone());
    }
    let pre = resample_volume(&seqs.pre, from, to)?;
    let posts = seqs
        .posts
        .iter()
        .map(|v| resample_volume(v, from, to))
        .collect::<Result<Vec<_>, _>>()?;
    let extent = (pre.dims[0], pre.dims[1]);
    let boxes = ann
        .boxes
        .iter()
        .map(|(&z, b)| (z, scale_box(b, from, to, extent)))
        .collect();
    Ok((
        SequenceSet {
            patient_id: seqs.patient_id.clone(),
            pre,
            posts,
            spacing_xy: to,
        },
        LesionAnnotation { boxes, ..ann.clone() },
    ))
}

/// Builds the three subtraction channels from the first three post-contrast
/// sequences; later ones are ignored.
pub fn build_subtraction(seqs: &SequenceSet) -> Result<SubtractionVolume, PreprocessError> {
    if seqs.posts.len() < 3 {
        return Err(PreprocessError::Sequences(format!(
            "{}: posts < 3 (got {})",
            seqs.patient_id,
            seqs.posts.len()
        )));
    }
    let make = |post: &Volume3D| -> Result<Volume3D, PreprocessError> {
        if post.dims != seqs.pre.dims {
            return Err(PreprocessError::Sequences(format!(
                "{}: dims {:?} differ from pre {:?}",
                seqs.patient_id, post.dims, seqs.pre.dims
            )));
        }
        Ok(Volume3D {
            dims: post.dims,
            voxels: post.voxels.iter().zip(&seqs.pre.voxels).map(|(a, b)| a - b).collect(),
        })
    };
    Ok(SubtractionVolume {
        patient_id: seqs.patient_id.clone(),
        channels: [make(&seqs.posts[0])?, make(&seqs.posts[1])?, make(&seqs.posts[2])?],
    })
}

/// Slices whose box area is strictly greater than `min_area`, ascending.
pub fn eligible_slices(annotation: &LesionAnnotation, min_area: usize) -> Vec<usize> {
    annotation
        .boxes
        .iter()
        .filter(|(_, b)| b.area() > min_area)
        .map(|(&z, _)| z)
        .collect()
}

/// Samples a `size`x`size` patch around `(cx, cy)` rotated by `angle_deg`.
/// Output pixel `(u, v)` reads source `centre + R(angle) (u - size/2, v - size/2)`.
fn sample_patch(volume: &SubtractionVolume, z: usize, cx: usize, cy: usize, size: usize, angle_deg: f64) -> Vec<f32> {
    let half = (size / 2) as f64;
    let (sin, cos) = if angle_deg == 0.0 {
        (0.0, 1.0)
    } else {
        angle_deg.to_radians().sin_cos()
    };
    let images: Vec<Image2D> = (0..3).map(|c| volume.slice_image(c, z)).collect();
    let mut data = Vec::with_capacity(size * size * 3);
    for v in 0..size {
        let dy = v as f64 - half;
        for u in 0..size {
            let dx = u as f64 - half;
            let sx = cx as f64 + cos * dx - sin * dy;
            let sy = cy as f64 + sin * dx + cos * dy;
            for img in &images {
                data.push(img.sample_zero(sx, sy));
            }
        }
    }
    data
}

fn lesion_patch(volume: &SubtractionVolume, annotation: &LesionAnnotation, z: usize, size: usize, tag: AugmentationTag) -> Patch {
    let (cx, cy) = annotation.boxes[&z].center();
    let angle = match tag {
        AugmentationTag::Center => 0.0,
        AugmentationTag::Rotation { angle_deg } => angle_deg,
    };
    Patch {
        size,
        data: sample_patch(volume, z, cx, cy, size, angle),
        patient_id: annotation.patient_id.clone(),
        slice_index: z,
        tag,
        label: annotation.label,
    }
}

/// Training patches: per eligible slice, the centred patch followed by
/// `n_rotations` patches rotated about the box centre by angles uniform in
/// `[0, 360)` degrees, drawn in slice order from `Xoshiro256::new(rng_seed)`.
pub fn extract_training_patches(
    volume: &SubtractionVolume,
    annotation: &LesionAnnotation,
    config: &PreprocessConfig,
    rng_seed: u64,
) -> Result<Vec<Patch>, PreprocessError> {
    let slices = eligible_slices(annotation, config.min_bbox_area);
    if slices.is_empty() {
        return Err(PreprocessError::NoEligibleSlices(annotation.patient_id.clone()));
    }
    let mut rng = Xoshiro256::new(rng_seed);
    let mut patches = Vec::with_capacity(slices.len() * (1 + config.n_rotations));
    for z in slices {
        patches.push(lesion_patch(volume, annotation, z, config.patch_size, AugmentationTag::Center));
        for _ in 0..config.n_rotations {
            let angle_deg = rng.uniform(0.0, 360.0);
            patches.push(lesion_patch(
                volume,
                annotation,
                z,
                config.patch_size,
                AugmentationTag::Rotation { angle_deg },
            ));
        }
    }
    Ok(patches)
}

/// Eligible slices ranked by box area (descending, ties to the lower index),
/// truncated to `n`.
pub fn largest_slices(annotation: &LesionAnnotation, min_area: usize, n: usize) -> Vec<usize> {
    let mut slices = eligible_slices(annotation, min_area);
    slices.sort_by(|a, b| {
        annotation.boxes[b]
            .area()
            .cmp(&annotation.boxes[a].area())
            .then(a.cmp(b))
    });
    slices.truncate(n);
    slices
}

/// Test patches: one centred, unaugmented patch from each of the
/// `n_test_slices` largest eligible slices.
pub fn extract_test_patches(
    volume: &SubtractionVolume,
    annotation: &LesionAnnotation,
    config: &PreprocessConfig,
) -> Result<Vec<Patch>, PreprocessError> {
    let slices = largest_slices(annotation, config.min_bbox_area, config.n_test_slices);
    if slices.is_empty() {
        return Err(PreprocessError::NoEligibleSlices(annotation.patient_id.clone()));
    }
    Ok(slices
        .into_iter()
        .map(|z| lesion_patch(volume, annotation, z, config.patch_size, AugmentationTag::Center))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputMode {
    Train,
    Test,
}

/// Resizes a patch to the network input size and normalises intensities.
///
/// `Train`: resize to `train_resize`, then crop `model_input_size` at offset
/// `(ox, oy)` with `ox = below(train_resize - model_input_size + 1)` drawn
/// first and `oy` second from `Xoshiro256::new(rng_seed)`.
/// `Test`: resize straight to `model_input_size`; the seed is unused.
///
/// With `Normalization::Minmax` all channels are rescaled jointly to
/// `[0, 255]`; a constant patch becomes all zeros.
pub fn prepare_model_input(patch: &Patch, mode: InputMode, config: &PreprocessConfig, rng_seed: u64) -> Patch {
    let target = config.model_input_size;
    let channels: [Image2D; 3] = std::array::from_fn(|c| patch.channel(c));
    let resized: [Image2D; 3] = match mode {
        InputMode::Test => channels.map(|ch| resize_bilinear(&ch, target, target)),
        InputMode::Train => {
            let big = config.train_resize;
            let mut rng = Xoshiro256::new(rng_seed);
            let ox = rng.below(big - target + 1);
            let oy = rng.below(big - target + 1);
            channels.map(|ch| {
                let full = resize_bilinear(&ch, big, big);
                let mut out = Vec::with_capacity(target * target);
                for y in oy..oy + target {
                    out.extend_from_slice(&full.data[y * big + ox..y * big + ox + target]);
                }
                Image2D::new(target, target, out)
            })
        }
    };
    let mut out = patch.with_channels(resized);
    if config.normalization == Normalization::Minmax {
        minmax_rescale(&mut out.data);
    }
    out
}

fn minmax_rescale(data: &mut [f32]) {
    let (lo, hi) = data
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = hi - lo;
    if !(range > 0.0) || !range.is_finite() {
        data.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    let scale = 255.0 / f64::from(range);
    for v in data.iter_mut() {
        *v = ((f64::from(*v) - f64::from(lo)) * scale) as f32;
    }
}
