//! Pixel buffers and the low-level image operations every degradation builds on.
//!
//! Images are `f32` RGB, row-major and interleaved, with every sample kept in
//! `[0, 1]`. Intermediate arithmetic runs in `f64`; results are clamped when
//! they are turned back into an [`ImageF32`].

mod color;
mod io;
mod resample;

pub use color::{rgb_to_ycbcr, rgb_to_ycbcr_px, ycbcr_to_rgb, ycbcr_to_rgb_px};
pub use io::{load_image, quantize_u8, save_image, save_ppm};
pub use resample::{resample, ResampleFilter};

use crate::error::{Error, Result};

pub const CHANNELS: usize = 3;

/// H×W×3 floating-point image with samples in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageF32 {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl ImageF32 {
    /// Wraps interleaved RGB samples. Fails if the length is wrong, a
    /// dimension is zero, or any sample lies outside `[0, 1]`.
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        check_dims(width, height)?;
        if data.len() != width * height * CHANNELS {
            return Err(Error::LengthMismatch(data.len(), width * height * CHANNELS));
        }
        if let Some(bad) = data.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(Error::InvalidParam(format!("sample {bad} outside [0, 1]")));
        }
        Ok(ImageF32 {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Self {
        assert!(width >= 1 && height >= 1, "image dimensions must be at least 1x1");
        let rgb = rgb.map(|v| v.clamp(0.0, 1.0));
        let data = (0..width * height).flat_map(|_| rgb).collect();
        ImageF32 {
            width,
            height,
            data,
        }
    }

    /// Builds an image from a per-sample function `f(x, y, channel)`; values are clamped.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize, usize) -> f32) -> Self {
        assert!(width >= 1 && height >= 1, "image dimensions must be at least 1x1");
        let mut data = Vec::with_capacity(width * height * CHANNELS);
        for y in 0..height {
            for x in 0..width {
                for c in 0..CHANNELS {
                    data.push(clamp_unit_f32(f(x, y, c)));
                }
            }
        }
        ImageF32 {
            width,
            height,
            data,
        }
    }

    /// Clamps `f64` interleaved samples into a new image.
    pub(crate) fn from_f64_clamped(width: usize, height: usize, data: &[f64]) -> Self {
        debug_assert_eq!(data.len(), width * height * CHANNELS);
        ImageF32 {
            width,
            height,
            data: data.iter().map(|&v| clamp_unit(v) as f32).collect(),
        }
    }

    /// Assembles an image from three `f64` planes, clamping each sample.
    pub(crate) fn from_planes_clamped(width: usize, height: usize, planes: &[Vec<f64>; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * CHANNELS);
        for i in 0..width * height {
            for plane in planes {
                data.push(clamp_unit(plane[i]) as f32);
            }
        }
        ImageF32 {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * CHANNELS + c]
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * CHANNELS;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// One channel as an `f64` plane.
    pub(crate) fn plane(&self, c: usize) -> Vec<f64> {
        self.data.iter().skip(c).step_by(CHANNELS).map(|&v| v as f64).collect()
    }

    pub(crate) fn planes(&self) -> [Vec<f64>; 3] {
        [self.plane(0), self.plane(1), self.plane(2)]
    }

    /// Central `size`×`size` window (or the whole image along an axis that is
    /// already smaller).
    pub fn crop_center(&self, size: usize) -> ImageF32 {
        let w = self.width.min(size);
        let h = self.height.min(size);
        let x0 = (self.width - w) / 2;
        let y0 = (self.height - h) / 2;
        ImageF32::from_fn(w, h, |x, y, c| self.get(x0 + x, y0 + y, c))
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }
}

/// Per-pixel scene depth, arbitrary units, non-negative.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        check_dims(width, height)?;
        if data.len() != width * height {
            return Err(Error::LengthMismatch(data.len(), width * height));
        }
        if let Some(bad) = data.iter().find(|d| !d.is_finite() || **d < 0.0) {
            return Err(Error::InvalidParam(format!("depth value {bad} must be finite and >= 0")));
        }
        Ok(DepthMap {
            width,
            height,
            data,
        })
    }

    pub fn constant(width: usize, height: usize, depth: f32) -> Self {
        DepthMap::new(width, height, vec![depth; width * height]).expect("valid constant depth")
    }

    /// Uses the first channel of an image as depth.
    pub fn from_image(img: &ImageF32) -> Self {
        DepthMap {
            width: img.width(),
            height: img.height(),
            data: img.data().iter().step_by(CHANNELS).copied().collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }
}

/// Square, odd-sized, normalized filter taps.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel2D {
    size: usize,
    weights: Vec<f64>,
    // 1-D factor when the kernel is an outer product of it with itself.
    separable: Option<Vec<f64>>,
}

impl Kernel2D {
    pub const SUM_TOLERANCE: f64 = 1e-6;

    pub fn new(size: usize, weights: Vec<f64>) -> Result<Self> {
        if size.is_multiple_of(2) {
            return Err(Error::InvalidParam(format!("kernel size {size} must be odd")));
        }
        if weights.len() != size * size {
            return Err(Error::LengthMismatch(weights.len(), size * size));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidParam("kernel weights must be finite".into()));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(Error::InvalidParam(format!("kernel weights sum to {sum}, expected 1")));
        }
        Ok(Kernel2D {
            size,
            weights,
            separable: None,
        })
    }

    /// Outer product of a normalized 1-D kernel with itself.
    pub(crate) fn separable(taps: Vec<f64>) -> Result<Self> {
        let size = taps.len();
        let weights = taps.iter().flat_map(|&a| taps.iter().map(move |&b| a * b)).collect();
        let mut k = Kernel2D::new(size, weights)?;
        k.separable = Some(taps);
        Ok(k)
    }

    pub fn identity() -> Self {
        Kernel2D {
            size: 1,
            weights: vec![1.0],
            separable: Some(vec![1.0]),
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn radius(&self) -> usize {
        self.size / 2
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn at(&self, ky: usize, kx: usize) -> f64 {
        self.weights[ky * self.size + kx]
    }

    /// Point-reflected kernel (rotated by 180°).
    pub fn flipped(&self) -> Kernel2D {
        Kernel2D {
            size: self.size,
            weights: self.weights.iter().rev().copied().collect(),
            separable: self
                .separable
                .as_ref()
                .map(|t| t.iter().rev().copied().collect()),
        }
    }
}

fn check_dims(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidParam(format!(
            "image dimensions must be at least 1x1, got {width}x{height}"
        )));
    }
    Ok(())
}

#[inline]
pub(crate) fn clamp_unit(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

#[inline]
fn clamp_unit_f32(v: f32) -> f32 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

/// Reflect-101 border index: `-1 -> 1`, `n -> n - 2`. Handles offsets
/// larger than the image by folding repeatedly.
#[inline]
pub fn reflect101(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m >= n as isize {
        (period - m) as usize
    } else {
        m as usize
    }
}

fn reflected_indices(n: usize, radius: usize) -> Vec<usize> {
    (0..n + 2 * radius)
        .map(|i| reflect101(i as isize - radius as isize, n))
        .collect()
}

/// Correlates one `f64` plane with `k`, reflect-101 borders, no clamping.
pub(crate) fn correlate_plane(src: &[f64], width: usize, height: usize, k: &Kernel2D) -> Vec<f64> {
    let r = k.radius();
    let xs = reflected_indices(width, r);
    let ys = reflected_indices(height, r);
    if let Some(taps) = &k.separable {
        let mut tmp = vec![0.0; width * height];
        for y in 0..height {
            let row = &src[y * width..(y + 1) * width];
            for x in 0..width {
                let mut acc = 0.0;
                for (t, w) in taps.iter().enumerate() {
                    acc += w * row[xs[x + t]];
                }
                tmp[y * width + x] = acc;
            }
        }
        let mut out = vec![0.0; width * height];
        for y in 0..height {
            for (t, w) in taps.iter().enumerate() {
                let sy = ys[y + t];
                let src_row = &tmp[sy * width..(sy + 1) * width];
                let dst_row = &mut out[y * width..(y + 1) * width];
                for (d, s) in dst_row.iter_mut().zip(src_row) {
                    *d += w * s;
                }
            }
        }
        return out;
    }
    let size = k.size();
    let mut out = vec![0.0; width * height];
    for y in 0..height {
        let dst_row = &mut out[y * width..(y + 1) * width];
        for ky in 0..size {
            let sy = ys[y + ky];
            let src_row = &src[sy * width..(sy + 1) * width];
            for kx in 0..size {
                let w = k.at(ky, kx);
                if w == 0.0 {
                    continue;
                }
                for (x, d) in dst_row.iter_mut().enumerate() {
                    *d += w * src_row[xs[x + kx]];
                }
            }
        }
    }
    out
}

/// Per-channel correlation without the final clamp; interleaved RGB output.
pub fn convolve2d_unclamped(img: &ImageF32, k: &Kernel2D) -> Vec<f64> {
    let (w, h) = img.dims();
    let planes = img.planes().map(|p| correlate_plane(&p, w, h, k));
    let mut out = Vec::with_capacity(w * h * CHANNELS);
    for i in 0..w * h {
        for plane in &planes {
            out.push(plane[i]);
        }
    }
    out
}

/// Per-channel 2-D correlation with reflect-101 padding, clamped to `[0, 1]`.
pub fn convolve2d(img: &ImageF32, k: &Kernel2D) -> ImageF32 {
    if k.size() == 1 && k.weights[0] == 1.0 {
        return img.clone();
    }
    let (w, h) = img.dims();
    let planes = img.planes().map(|p| correlate_plane(&p, w, h, k));
    ImageF32::from_planes_clamped(w, h, &planes)
}
