//! Spacing normalisation, subtraction images, lesion slice selection, and
//! patch extraction with rotation augmentation.

mod cache;
mod image;
mod patches;

pub use cache::{PatchCache, CACHE_MANIFEST};
pub use image::{resample_slice, resampled_extent, resize_bilinear, scale_box, Image2D};
pub use patches::{
    build_subtraction, common_spacing, eligible_slices, extract_test_patches, extract_training_patches,
    largest_slices, prepare_model_input, resample_record, AugmentationTag, FeatureInput, InputMode,
    Normalization, Patch, PreprocessConfig, SubtractionVolume,
};

#[derive(Debug, thiserror::Error)]
pub enum PreprocessError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("non-positive pixel spacing {0:?}")]
    InvalidSpacing([f64; 2]),
    #[error("sequence error: {0}")]
    Sequences(String),
    #[error("no eligible slices for patient {0:?}")]
    NoEligibleSlices(String),
    #[error("invalid preprocess config: {0}")]
    Config(String),
    #[error("patch cache {path}: {msg}")]
    Cache { path: std::path::PathBuf, msg: String },
}
