use super::PreprocessError;
use crate::dataset::BBox;

/// Single-channel 2D image, x fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Image2D {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl Image2D {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), width * height, "image buffer does not match {width}x{height}");
        Self { width, height, data }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::new(width, height, vec![0.0; width * height])
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[x + self.width * y]
    }

    #[inline]
    fn get_or_zero(&self, x: isize, y: isize) -> f64 {
        if x < 0 || y < 0 || x >= self.width as isize || y >= self.height as isize {
            0.0
        } else {
            f64::from(self.data[x as usize + self.width * y as usize])
        }
    }

    /// Bilinear sample with coordinates clamped to the image extent.
    pub fn sample_clamped(&self, x: f64, y: f64) -> f32 {
        let x = x.clamp(0.0, (self.width - 1) as f64);
        let y = y.clamp(0.0, (self.height - 1) as f64);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let v00 = f64::from(self.get(x0, y0));
        let v10 = f64::from(self.get(x1, y0));
        let v01 = f64::from(self.get(x0, y1));
        let v11 = f64::from(self.get(x1, y1));
        let top = v00 + fx * (v10 - v00);
        let bottom = v01 + fx * (v11 - v01);
        (top + fy * (bottom - top)) as f32
    }

    /// Bilinear sample where pixels outside the image read as zero.
    pub fn sample_zero(&self, x: f64, y: f64) -> f32 {
        let xf = x.floor();
        let yf = y.floor();
        let (x0, y0) = (xf as isize, yf as isize);
        let fx = x - xf;
        let fy = y - yf;
        let v00 = self.get_or_zero(x0, y0);
        let v10 = self.get_or_zero(x0 + 1, y0);
        let v01 = self.get_or_zero(x0, y0 + 1);
        let v11 = self.get_or_zero(x0 + 1, y0 + 1);
        let top = v00 + fx * (v10 - v00);
        let bottom = v01 + fx * (v11 - v01);
        (top + fy * (bottom - top)) as f32
    }
}

/// Resamples with pixel-centre alignment: output pixel `d` reads source
/// coordinate `(d + 0.5) * step - 0.5`, clamped at the edges.
fn resample_with_step(img: &Image2D, out_w: usize, out_h: usize, step_x: f64, step_y: f64) -> Image2D {
    let mut out = Vec::with_capacity(out_w * out_h);
    for v in 0..out_h {
        let sy = (v as f64 + 0.5) * step_y - 0.5;
        for u in 0..out_w {
            let sx = (u as f64 + 0.5) * step_x - 0.5;
            out.push(img.sample_clamped(sx, sy));
        }
    }
    Image2D::new(out_w, out_h, out)
}

/// Bilinear resize to an explicit output size.
pub fn resize_bilinear(img: &Image2D, out_w: usize, out_h: usize) -> Image2D {
    if out_w == img.width && out_h == img.height {
        return img.clone();
    }
    resample_with_step(
        img,
        out_w,
        out_h,
        img.width as f64 / out_w as f64,
        img.height as f64 / out_h as f64,
    )
}

/// Output extent of a slice resampled from `from` to `to` mm/pixel.
pub fn resampled_extent(width: usize, height: usize, from: [f64; 2], to: [f64; 2]) -> (usize, usize) {
    let w = (width as f64 * from[0] / to[0]).round().max(1.0) as usize;
    let h = (height as f64 * from[1] / to[1]).round().max(1.0) as usize;
    (w, h)
}

fn check_spacing(spacing: [f64; 2]) -> Result<(), PreprocessError> {
    if spacing.iter().all(|s| s.is_finite() && *s > 0.0) {
        Ok(())
    } else {
        Err(PreprocessError::InvalidSpacing(spacing))
    }
}

/// Rescales a slice from one in-plane pixel spacing to another.
///
/// Output dims are `round(input * from / to)`; sampling follows physical
/// position, so `from == to` is the exact identity.
pub fn resample_slice(img: &Image2D, from: [f64; 2], to: [f64; 2]) -> Result<Image2D, PreprocessError> {
    check_spacing(from)?;
    check_spacing(to)?;
    if from == to {
        return Ok(img.clone());
    }
    let (w, h) = resampled_extent(img.width, img.height, from, to);
    Ok(resample_with_step(img, w, h, to[0] / from[0], to[1] / from[1]))
}

/// Scales a half-open box by `from / to`, rounding outward to the enclosing
/// integer box and clipping to `extent`.
pub fn scale_box(b: &BBox, from: [f64; 2], to: [f64; 2], extent: (usize, usize)) -> BBox {
    if from == to {
        return *b;
    }
    let sx = from[0] / to[0];
    let sy = from[1] / to[1];
    let lo = |v: usize, s: f64| (v as f64 * s).floor().max(0.0) as usize;
    let hi = |v: usize, s: f64, limit: usize| ((v as f64 * s).ceil() as usize).min(limit);
    let x_min = lo(b.x_min, sx).min(extent.0.saturating_sub(1));
    let y_min = lo(b.y_min, sy).min(extent.1.saturating_sub(1));
    let x_max = hi(b.x_max, sx, extent.0).max(x_min + 1);
    let y_max = hi(b.y_max, sy, extent.1).max(y_min + 1);
    BBox::new(x_min, y_min, x_max, y_max)
}
