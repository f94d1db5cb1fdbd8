//! Synthetic DCE-MRI cohorts with a planted, texture-borne class signal.
//!
//! Each patient gets one ellipsoidal enhancing lesion. Post-contrast volumes
//! add a smooth enhancement inside the lesion that is absent from the
//! pre-contrast volume. Positive patients additionally carry an isotropic
//! high-frequency texture (a sum of plane waves at random orientations) of
//! relative amplitude `signal_strength` inside the lesion. Mean enhancement
//! is the same for both classes, so only frequency content separates them.
//!
//! Random streams: labels come from `Xoshiro256::new(seed)`; patient `i`
//! draws everything else from `Xoshiro256::new(derive_seed(seed, i + 1))`,
//! in a fixed order that does not depend on its label.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::types::{BBox, LesionAnnotation, PatientRecord, SequenceSet, Volume3D};
use super::DatasetError;
use crate::rng::{derive_seed, Xoshiro256};

const TEXTURE_WAVES: usize = 8;
const BACKGROUND_WAVES: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpacingChoice {
    /// Millimetres per pixel (isotropic in-plane).
    pub spacing_mm: f64,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomSpec {
    pub n_patients: usize,
    pub positive_fraction: f64,
    pub dims: [usize; 3],
    pub spacing_choices: Vec<SpacingChoice>,
    /// In-plane lesion semi-axis range, pixels.
    pub lesion_radius_range: (f64, f64),
    /// Texture amplitude relative to the lesion enhancement (positives only).
    pub signal_strength: f64,
    /// Standard deviation of the independent per-sequence Gaussian noise.
    pub noise_sigma: f64,
    /// Texture wavelength in pixels.
    pub texture_wavelength: f64,
    pub n_posts: usize,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        // Field-of-view / matrix pairs of the clinical scanners, in mm/pixel.
        Self {
            n_patients: 131,
            positive_fraction: 35.0 / 131.0,
            dims: [128, 128, 10],
            spacing_choices: vec![
                SpacingChoice {
                    spacing_mm: 340.0 / 350.0,
                    probability: 0.4,
                },
                SpacingChoice {
                    spacing_mm: 380.0 / 350.0,
                    probability: 0.3,
                },
                SpacingChoice {
                    spacing_mm: 360.0 / 448.0,
                    probability: 0.3,
                },
            ],
            lesion_radius_range: (10.0, 22.0),
            signal_strength: 0.5,
            noise_sigma: 0.02,
            texture_wavelength: 4.0,
            n_posts: 3,
        }
    }
}

impl PhantomSpec {
    pub fn n_positive(&self) -> usize {
        (self.n_patients as f64 * self.positive_fraction).round() as usize
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let fail = |msg: String| Err(DatasetError::Phantom(msg));
        if self.n_patients == 0 {
            return fail("n_patients must be positive".into());
        }
        if !(self.positive_fraction > 0.0 && self.positive_fraction < 1.0) {
            return fail(format!(
                "positive_fraction must lie in (0, 1), got {}",
                self.positive_fraction
            ));
        }
        if self.dims.contains(&0) {
            return fail(format!("dims must be positive, got {:?}", self.dims));
        }
        if self.spacing_choices.is_empty() {
            return fail("spacing_choices is empty".into());
        }
        let total: f64 = self.spacing_choices.iter().map(|c| c.probability).sum();
        if (total - 1.0).abs() > 1e-9
            || self
                .spacing_choices
                .iter()
                .any(|c| !(c.probability >= 0.0) || !(c.spacing_mm > 0.0) || !c.spacing_mm.is_finite())
        {
            return fail(format!("spacing probabilities must be non-negative and sum to 1 (got {total})"));
        }
        let (r_lo, r_hi) = self.lesion_radius_range;
        if !(r_lo > 0.0 && r_hi >= r_lo && r_hi.is_finite()) {
            return fail(format!("invalid lesion_radius_range {:?}", self.lesion_radius_range));
        }
        if !(self.signal_strength >= 0.0 && self.signal_strength.is_finite()) {
            return fail(format!("signal_strength must be >= 0, got {}", self.signal_strength));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return fail(format!("noise_sigma must be >= 0, got {}", self.noise_sigma));
        }
        if !(self.texture_wavelength >= 2.0) {
            return fail(format!("texture_wavelength must be >= 2 pixels, got {}", self.texture_wavelength));
        }
        if self.n_posts < 3 {
            return fail(format!("posts < 3 (n_posts = {})", self.n_posts));
        }
        let [nx, ny, nz] = self.dims;
        let need = 2.0 * r_hi.ceil() + 3.0;
        if (nx as f64) < need || (ny as f64) < need {
            return fail(format!(
                "lesion of radius {r_hi} cannot fit in {nx}x{ny} (needs at least {need} pixels)"
            ));
        }
        if nz < 3 {
            return fail(format!("lesion must span 3 slices but nz = {nz}"));
        }
        Ok(())
    }
}

/// Generates a labelled cohort. Pure function of `(spec, seed)`.
pub fn generate_phantom(spec: &PhantomSpec, seed: u64) -> Result<Vec<PatientRecord>, DatasetError> {
    spec.validate()?;
    let n = spec.n_patients;
    let mut order: Vec<usize> = (0..n).collect();
    Xoshiro256::new(seed).shuffle(&mut order);
    let mut labels = vec![false; n];
    for &i in &order[..spec.n_positive()] {
        labels[i] = true;
    }
    let width = n.to_string().len().max(4);
    Ok((0..n)
        .map(|i| {
            let id = format!("P{i:0width$}");
            generate_patient(spec, derive_seed(seed, i as u64 + 1), &id, labels[i])
        })
        .collect())
}

struct Wave {
    kx: f64,
    ky: f64,
    phase: f64,
    z_phase: f64,
}

impl Wave {
    fn eval(&self, x: f64, y: f64, z: f64) -> f64 {
        (self.kx * x + self.ky * y + self.phase + self.z_phase * z).cos()
    }
}

fn random_waves(rng: &mut Xoshiro256, count: usize, wavelength: (f64, f64)) -> Vec<Wave> {
    (0..count)
        .map(|_| {
            let theta = rng.uniform(0.0, PI);
            let lambda = rng.uniform(wavelength.0, wavelength.1);
            let k = 2.0 * PI / lambda;
            Wave {
                kx: k * theta.cos(),
                ky: k * theta.sin(),
                phase: rng.uniform(0.0, 2.0 * PI),
                z_phase: rng.uniform(0.0, 2.0 * PI),
            }
        })
        .collect()
}

fn smoothstep(edge0: f64, edge1: f64, x: f64) -> f64 {
    let t = ((x - edge0) / (edge1 - edge0)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Builds one patient from its own stream. `label` only switches the texture on.
pub fn generate_patient(spec: &PhantomSpec, patient_seed: u64, patient_id: &str, label: bool) -> PatientRecord {
    let mut rng = Xoshiro256::new(patient_seed);
    let [nx, ny, nz] = spec.dims;

    let u = rng.next_f64();
    let mut cumulative = 0.0;
    let mut spacing = spec.spacing_choices.last().map(|c| c.spacing_mm).unwrap_or(1.0);
    for choice in &spec.spacing_choices {
        cumulative += choice.probability;
        if u < cumulative {
            spacing = choice.spacing_mm;
            break;
        }
    }

    let (r_lo, r_hi) = spec.lesion_radius_range;
    let rx = rng.uniform(r_lo, r_hi);
    let ry = rng.uniform(r_lo, r_hi);
    let rz_max = (2.5f64).min((nz as f64 - 1.0) / 2.0 + 0.49);
    let rz = rng.uniform(1.5, rz_max.max(1.5));
    let margin_x = rx.ceil() + 1.0;
    let margin_y = ry.ceil() + 1.0;
    let cx = rng.uniform(margin_x, nx as f64 - margin_x);
    let cy = rng.uniform(margin_y, ny as f64 - margin_y);
    let rz_floor = rz.floor() as usize;
    let cz = (rz_floor + rng.below(nz - 2 * rz_floor)) as f64;
    let enhancement = rng.uniform(0.8, 1.2);

    let lambda = spec.texture_wavelength;
    let texture = random_waves(&mut rng, TEXTURE_WAVES, (0.9 * lambda, 1.1 * lambda));
    let texture_norm = (TEXTURE_WAVES as f64 / 2.0).sqrt();
    let anatomy = random_waves(&mut rng, BACKGROUND_WAVES, (30.0, 60.0));
    let parenchyma = random_waves(&mut rng, BACKGROUND_WAVES, (20.0, 50.0));
    let amplitude = if label { spec.signal_strength } else { 0.0 };

    let plane = nx * ny;
    let mut pre = vec![0f32; plane * nz];
    let mut lesion = vec![0f32; plane * nz];
    let mut background = vec![0f32; plane * nz];
    let mut boxes = BTreeMap::new();
    for z in 0..nz {
        let zf = z as f64;
        let mut bbox: Option<BBox> = None;
        for y in 0..ny {
            for x in 0..nx {
                let (xf, yf) = (x as f64, y as f64);
                let i = x + nx * (y + ny * z);
                let a: f64 = anatomy.iter().map(|w| w.eval(xf, yf, zf * 0.1)).sum();
                pre[i] = (1.0 + 0.1 * a) as f32;
                let p: f64 = parenchyma.iter().map(|w| w.eval(xf, yf, zf * 0.1)).sum();
                background[i] = (0.05 * (1.0 + p / BACKGROUND_WAVES as f64)) as f32;

                let q = ((xf - cx) / rx).powi(2) + ((yf - cy) / ry).powi(2) + ((zf - cz) / rz).powi(2);
                if q <= 1.0 {
                    let weight = 1.0 - smoothstep(0.85, 1.0, q.sqrt());
                    let t: f64 = texture.iter().map(|w| w.eval(xf, yf, zf)).sum::<f64>() / texture_norm;
                    lesion[i] = (enhancement * weight * (1.0 + amplitude * t)) as f32;
                    bbox = Some(match bbox {
                        None => BBox::new(x, y, x + 1, y + 1),
                        Some(b) => BBox::new(b.x_min.min(x), b.y_min.min(y), b.x_max.max(x + 1), b.y_max.max(y + 1)),
                    });
                }
            }
        }
        if let Some(b) = bbox {
            boxes.insert(z, b);
        }
    }

    let sigma = spec.noise_sigma;
    let mut noisy = |base: &dyn Fn(usize) -> f32| -> Volume3D {
        let voxels = (0..plane * nz)
            .map(|i| base(i) + (sigma * rng.gaussian()) as f32)
            .collect();
        Volume3D {
            dims: spec.dims,
            voxels,
        }
    };
    let pre_volume = noisy(&|i| pre[i]);
    let posts: Vec<Volume3D> = (0..spec.n_posts)
        .map(|t| {
            let kinetics = 1.0 - 0.3 * 0.5f32.powi(t as i32);
            noisy(&|i| pre[i] + kinetics * (background[i] + lesion[i]))
        })
        .collect();

    let first = *boxes.keys().next().expect("lesion spans at least one slice");
    let last = *boxes.keys().next_back().expect("lesion spans at least one slice");
    let seqs = SequenceSet {
        patient_id: patient_id.to_string(),
        pre: pre_volume,
        posts,
        spacing_xy: [spacing, spacing],
    };
    let ann = LesionAnnotation {
        patient_id: patient_id.to_string(),
        boxes,
        slice_range: (first, last),
        label,
    };
    (seqs, ann)
}
