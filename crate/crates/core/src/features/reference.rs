//! Small deterministic convolutional network used when no pretrained model
//! is available.
//!
//! ```text
//! input 3 x S x S
//!  conv1: 3 -> 8, 3x3, stride 2, pad 1      tap "conv1" (pre-activation)
//!  ReLU
//!  conv2: 8 -> 16, 3x3, stride 2, pad 1     tap "conv2" (pre-activation)
//!  ReLU, adaptive max pool to 4 x 4, flatten (16 * 16 = 256, channel-major)
//!  fc1: 256 -> 32                            tap "fc1"
//! ```
//!
//! Weights are drawn from `Xoshiro256::new(seed)` in the order conv1, conv2,
//! fc1, each laid out `[out][in][ky][kx]` (or `[out][in]`), as
//! `gaussian() / sqrt(fan_in)` rounded to f32. Biases are zero.

use std::collections::BTreeMap;

use super::{Backend, FeatureError, FeatureMap, LayerInfo};
use crate::preprocess::Patch;
use crate::rng::Xoshiro256;

pub const CONV1_OUT: usize = 8;
pub const CONV2_OUT: usize = 16;
pub const POOL_GRID: usize = 4;
pub const FC1_OUT: usize = 32;
const KERNEL: usize = 3;
const STRIDE: usize = 2;
const PAD: usize = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    /// `[out][in][ky][kx]`.
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

impl Conv2d {
    fn random(rng: &mut Xoshiro256, in_channels: usize, out_channels: usize) -> Self {
        let fan_in = in_channels * KERNEL * KERNEL;
        let scale = 1.0 / (fan_in as f64).sqrt();
        Self {
            in_channels,
            out_channels,
            weights: (0..out_channels * fan_in).map(|_| (rng.gaussian() * scale) as f32).collect(),
            bias: vec![0.0; out_channels],
        }
    }

    #[inline]
    pub fn weight(&self, o: usize, c: usize, ky: usize, kx: usize) -> f32 {
        self.weights[((o * self.in_channels + c) * KERNEL + ky) * KERNEL + kx]
    }

    pub fn output_extent(input: usize) -> usize {
        (input + 2 * PAD - KERNEL) / STRIDE + 1
    }

    fn forward(&self, input: &FeatureMap) -> FeatureMap {
        let (h, w) = (input.height, input.width);
        let oh = Self::output_extent(h);
        let ow = Self::output_extent(w);
        let mut data = vec![0f32; self.out_channels * oh * ow];
        for o in 0..self.out_channels {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = f64::from(self.bias[o]);
                    for c in 0..self.in_channels {
                        let plane = &input.data[c * h * w..(c + 1) * h * w];
                        for ky in 0..KERNEL {
                            let iy = (oy * STRIDE + ky) as isize - PAD as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let row = &plane[iy as usize * w..(iy as usize + 1) * w];
                            for kx in 0..KERNEL {
                                let ix = (ox * STRIDE + kx) as isize - PAD as isize;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                acc += f64::from(self.weight(o, c, ky, kx)) * f64::from(row[ix as usize]);
                            }
                        }
                    }
                    data[(o * oh + oy) * ow + ox] = acc as f32;
                }
            }
        }
        FeatureMap {
            channels: self.out_channels,
            height: oh,
            width: ow,
            data,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub in_features: usize,
    pub out_features: usize,
    /// `[out][in]`.
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

impl Linear {
    fn random(rng: &mut Xoshiro256, in_features: usize, out_features: usize) -> Self {
        let scale = 1.0 / (in_features as f64).sqrt();
        Self {
            in_features,
            out_features,
            weights: (0..out_features * in_features).map(|_| (rng.gaussian() * scale) as f32).collect(),
            bias: vec![0.0; out_features],
        }
    }

    fn forward(&self, input: &[f32]) -> Vec<f32> {
        (0..self.out_features)
            .map(|o| {
                let row = &self.weights[o * self.in_features..(o + 1) * self.in_features];
                let acc = row
                    .iter()
                    .zip(input)
                    .fold(f64::from(self.bias[o]), |acc, (w, x)| acc + f64::from(*w) * f64::from(*x));
                acc as f32
            })
            .collect()
    }
}

fn relu(map: &FeatureMap) -> FeatureMap {
    FeatureMap {
        data: map.data.iter().map(|v| v.max(0.0)).collect(),
        ..map.clone()
    }
}

/// Max over a `grid x grid` partition of each channel plane; bin `i` spans
/// `[floor(i * n / grid), ceil((i + 1) * n / grid))`.
pub fn adaptive_max_pool(map: &FeatureMap, grid: usize) -> Vec<f32> {
    let bounds = |i: usize, n: usize| (i * n / grid, ((i + 1) * n).div_ceil(grid));
    let mut out = Vec::with_capacity(map.channels * grid * grid);
    for c in 0..map.channels {
        let plane = &map.data[c * map.height * map.width..(c + 1) * map.height * map.width];
        for gy in 0..grid {
            let (y0, y1) = bounds(gy, map.height);
            for gx in 0..grid {
                let (x0, x1) = bounds(gx, map.width);
                let mut best = f32::NEG_INFINITY;
                for y in y0..y1 {
                    for x in x0..x1 {
                        best = best.max(plane[y * map.width + x]);
                    }
                }
                out.push(best);
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceCnn {
    pub seed: u64,
    pub input_size: usize,
    pub conv1: Conv2d,
    pub conv2: Conv2d,
    pub fc1: Linear,
    catalog: Vec<LayerInfo>,
}

impl ReferenceCnn {
    pub fn new(seed: u64, input_size: usize) -> Self {
        assert!(input_size >= POOL_GRID * 4, "reference CNN input must be at least 16 pixels");
        let mut rng = Xoshiro256::new(seed);
        let conv1 = Conv2d::random(&mut rng, 3, CONV1_OUT);
        let conv2 = Conv2d::random(&mut rng, CONV1_OUT, CONV2_OUT);
        let fc1 = Linear::random(&mut rng, CONV2_OUT * POOL_GRID * POOL_GRID, FC1_OUT);
        let s1 = Conv2d::output_extent(input_size);
        let s2 = Conv2d::output_extent(s1);
        let catalog = vec![
            LayerInfo::new("conv1", [CONV1_OUT, s1, s1]),
            LayerInfo::new("conv2", [CONV2_OUT, s2, s2]),
            LayerInfo::new("fc1", [FC1_OUT, 1, 1]),
        ];
        Self {
            seed,
            input_size,
            conv1,
            conv2,
            fc1,
            catalog,
        }
    }
}

/// Interleaved HWC patch to a CHW map.
pub fn patch_to_chw(patch: &Patch) -> FeatureMap {
    let n = patch.size * patch.size;
    let mut data = vec![0f32; 3 * n];
    for (i, px) in patch.data.chunks_exact(3).enumerate() {
        for c in 0..3 {
            data[c * n + i] = px[c];
        }
    }
    FeatureMap {
        channels: 3,
        height: patch.size,
        width: patch.size,
        data,
    }
}

impl Backend for ReferenceCnn {
    fn catalog(&self) -> &[LayerInfo] {
        &self.catalog
    }

    fn input_size(&self) -> usize {
        self.input_size
    }

    fn forward(&self, patch: &Patch) -> Result<BTreeMap<String, FeatureMap>, FeatureError> {
        let input = patch_to_chw(patch);
        let conv1 = self.conv1.forward(&input);
        let conv2 = self.conv2.forward(&relu(&conv1));
        let pooled = adaptive_max_pool(&relu(&conv2), POOL_GRID);
        let fc1 = FeatureMap::vector(self.fc1.forward(&pooled));
        Ok(BTreeMap::from([
            ("conv1".to_string(), conv1),
            ("conv2".to_string(), conv2),
            ("fc1".to_string(), fc1),
        ]))
    }
}
