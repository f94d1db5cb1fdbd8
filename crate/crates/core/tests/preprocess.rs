use std::collections::BTreeMap;

use dfup::dataset::{generate_phantom, BBox, LesionAnnotation, PhantomSpec, SequenceSet, Volume3D};
use dfup::preprocess::{
    build_subtraction, common_spacing, eligible_slices, extract_test_patches, extract_training_patches,
    prepare_model_input, resample_record, resample_slice, AugmentationTag, Image2D, InputMode, PreprocessConfig,
};
use dfup::rng::Xoshiro256;
use proptest::prelude::*;

fn volume(dims: [usize; 3], f: impl Fn(usize, usize, usize) -> f32) -> Volume3D {
    let mut v = Volume3D::zeros(dims);
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                let i = v.index(x, y, z);
                v.voxels[i] = f(x, y, z);
            }
        }
    }
    v
}

fn seqs(n_posts: usize, dims: [usize; 3]) -> SequenceSet {
    SequenceSet {
        patient_id: "P0001".into(),
        pre: volume(dims, |x, y, z| (x + 2 * y + 3 * z) as f32 * 0.01),
        posts: (1..=n_posts)
            .map(|t| volume(dims, move |x, y, z| ((x * t + y + z) % 11) as f32 + t as f32))
            .collect(),
        spacing_xy: [1.0, 1.0],
    }
}

#[test]
fn subtraction_uses_first_three_posts() {
    let four = seqs(4, [5, 4, 2]);
    let mut three = four.clone();
    three.posts.truncate(3);
    let a = build_subtraction(&four).unwrap();
    assert_eq!(a, build_subtraction(&three).unwrap());
    for c in 0..3 {
        for (i, v) in a.channels[c].voxels.iter().enumerate() {
            assert_eq!(*v, four.posts[c].voxels[i] - four.pre.voxels[i]);
        }
    }
    let mut flat = four.clone();
    flat.posts = vec![flat.pre.clone(); 3];
    assert!(build_subtraction(&flat).unwrap().channels.iter().all(|c| c.voxels.iter().all(|v| *v == 0.0)));
    let mut short = four;
    short.posts.truncate(2);
    assert!(build_subtraction(&short).is_err());
}

#[test]
fn upsampled_ramp_matches_hand_computed_weights() {
    let img = Image2D::new(2, 2, vec![0.0, 2.0, 0.0, 2.0]);
    let out = resample_slice(&img, [1.0, 1.0], [0.5, 0.5]).unwrap();
    assert_eq!((out.width, out.height), (4, 4));
    // Output column d samples source (d + 0.5) / 2 - 0.5, clamped to [0, 1].
    for y in 0..4 {
        let row: Vec<f32> = (0..4).map(|x| out.get(x, y)).collect();
        assert_eq!(row, vec![0.0, 0.5, 1.5, 2.0]);
    }
}

#[test]
fn spacing_tie_goes_to_finer_resolution() {
    let spec = PhantomSpec {
        n_patients: 2,
        dims: [40, 40, 5],
        lesion_radius_range: (5.0, 8.0),
        ..PhantomSpec::default()
    };
    let mut data = generate_phantom(&spec, 0).unwrap();
    data[0].0.spacing_xy = [0.9, 0.9];
    data[1].0.spacing_xy = [0.7, 0.7];
    assert_eq!(common_spacing(&data).unwrap(), [0.7, 0.7]);
    assert_eq!(common_spacing(&data[..1]).unwrap(), [0.9, 0.9]);
    assert!(common_spacing(&[]).is_err());
}

#[test]
fn phantom_patch_counts_follow_eligible_slices() {
    let spec = PhantomSpec {
        n_patients: 8,
        dims: [64, 64, 8],
        lesion_radius_range: (8.0, 14.0),
        ..PhantomSpec::default()
    };
    let data = generate_phantom(&spec, 12).unwrap();
    let spacing = common_spacing(&data).unwrap();
    let config = PreprocessConfig {
        patch_size: 32,
        ..PreprocessConfig::default()
    };
    let mut expected = 0;
    let mut emitted = 0;
    for record in &data {
        let (s, ann) = resample_record(record, spacing).unwrap();
        let eligible = eligible_slices(&ann, config.min_bbox_area);
        if eligible.is_empty() {
            continue;
        }
        let vol = build_subtraction(&s).unwrap();
        let patches = extract_training_patches(&vol, &ann, &config, 7).unwrap();
        expected += eligible.len() * (1 + config.n_rotations);
        emitted += patches.len();
        assert!(patches.iter().all(|p| p.size == 32 && p.data.len() == 32 * 32 * 3 && p.is_finite()));
        let test = extract_test_patches(&vol, &ann, &config).unwrap();
        assert_eq!(test.len(), eligible.len().min(5));
        assert!(test.iter().all(|p| p.tag == AugmentationTag::Center));
    }
    assert!(expected > 0);
    assert_eq!(emitted, expected);
}

#[test]
fn train_crop_offset_follows_the_seed() {
    let config = PreprocessConfig {
        model_input_size: 8,
        train_resize: 12,
        normalization: dfup::preprocess::Normalization::Off,
        ..PreprocessConfig::default()
    };
    let size = 12;
    let mut data = Vec::new();
    for y in 0..size {
        for x in 0..size {
            data.extend([(x + 100 * y) as f32; 3]);
        }
    }
    let patch = dfup::preprocess::Patch {
        size,
        data,
        patient_id: "P".into(),
        slice_index: 0,
        tag: AugmentationTag::Center,
        label: true,
    };
    let out = prepare_model_input(&patch, InputMode::Train, &config, 99);
    let mut rng = Xoshiro256::new(99);
    let ox = rng.below(5);
    let oy = rng.below(5);
    assert_eq!(out.data[0], (ox + 100 * oy) as f32);
    assert_eq!(out, prepare_model_input(&patch, InputMode::Train, &config, 99));
    let test = prepare_model_input(&patch, InputMode::Test, &config, 1);
    assert_eq!(test, prepare_model_input(&patch, InputMode::Test, &config, 2));
}

fn annotation(boxes: BTreeMap<usize, BBox>) -> LesionAnnotation {
    let lo = boxes.keys().next().copied().unwrap_or(0);
    let hi = boxes.keys().last().copied().unwrap_or(0);
    LesionAnnotation {
        patient_id: "P0001".into(),
        boxes,
        slice_range: (lo, hi),
        label: true,
    }
}

proptest! {
    #[test]
    fn rotation_fixes_the_centre_pixel(seed in any::<u64>()) {
        let dims = [40, 40, 3];
        let mut rng = Xoshiro256::new(seed);
        let noise: Vec<f32> = (0..40 * 40 * 3).map(|_| rng.uniform(-5.0, 5.0) as f32).collect();
        let s = SequenceSet {
            patient_id: "P0001".into(),
            pre: Volume3D::zeros(dims),
            posts: (0..3).map(|t| volume(dims, |x, y, z| noise[x + 40 * y + 1600 * z] * (t + 1) as f32)).collect(),
            spacing_xy: [1.0, 1.0],
        };
        let vol = build_subtraction(&s).unwrap();
        let ann = annotation(BTreeMap::from([(1, BBox::new(10, 12, 25, 27))]));
        let config = PreprocessConfig { patch_size: 21, ..PreprocessConfig::default() };
        let patches = extract_training_patches(&vol, &ann, &config, seed).unwrap();
        let (cx, cy) = ann.boxes[&1].center();
        let half = config.patch_size / 2;
        for p in &patches {
            for c in 0..3 {
                let want = vol.channels[c].voxels[vol.channels[c].index(cx, cy, 1)];
                let got = p.data[(half * config.patch_size + half) * 3 + c];
                prop_assert!((got - want).abs() <= 1e-5);
            }
        }
    }

    #[test]
    fn same_spacing_resample_is_identity(w in 1usize..12, h in 1usize..12, s in 0.2f64..3.0, seed in any::<u64>()) {
        let mut rng = Xoshiro256::new(seed);
        let img = Image2D::new(w, h, (0..w * h).map(|_| rng.gaussian() as f32).collect());
        prop_assert_eq!(resample_slice(&img, [s, s], [s, s]).unwrap(), img);
    }

    #[test]
    fn constant_images_stay_constant(w in 1usize..10, h in 1usize..10, from in 0.3f64..2.0, to in 0.3f64..2.0, value in -50.0f32..50.0) {
        let img = Image2D::new(w, h, vec![value; w * h]);
        let out = resample_slice(&img, [from, from], [to, to]).unwrap();
        prop_assert!(out.data.iter().all(|v| *v == value));
    }

    #[test]
    fn eligibility_is_monotone_in_box_size(
        boxes in prop::collection::btree_map(0usize..8, (0usize..20, 0usize..20, 1usize..20, 1usize..20), 1..8),
        grow in 0usize..8,
    ) {
        let make = |extra: usize| annotation(boxes.iter().map(|(&z, &(x, y, w, h))| (z, BBox::new(x, y, x + w + extra, y + h + extra))).collect());
        let small = eligible_slices(&make(0), 100);
        let large = eligible_slices(&make(grow), 100);
        prop_assert!(small.iter().all(|z| large.contains(z)));
        prop_assert!(small.windows(2).all(|w| w[0] < w[1]));
    }
}
