use super::kernels::{gaussian_kernel, sinc_kernel};
use super::{AlgArtifactParams, BlurParams, CompressionParams, DamageParams, NoiseParams, RainParams, ResizeParams, RingingParams};
use crate::error::{Error, Result};
use crate::imaging::{convolve2d, correlate_plane, resample, ImageF32, Kernel2D, CHANNELS};
use crate::jpeg;
use crate::rng::RngStream;

pub fn degrade_blur(img: &ImageF32, p: &BlurParams) -> Result<ImageF32> {
    Ok(convolve2d(img, &gaussian_kernel(p.ksize, p.sigma)?))
}

pub fn degrade_ringing(img: &ImageF32, p: &RingingParams) -> Result<ImageF32> {
    Ok(convolve2d(img, &sinc_kernel(p.ksize, p.omega)?))
}

/// Downscale by `scale` and back up to the original size.
pub fn degrade_resize(img: &ImageF32, p: &ResizeParams) -> Result<ImageF32> {
    let (w, h) = img.dims();
    let scale = p.scale.max(1) as usize;
    if w < scale || h < scale {
        return Err(Error::ImageTooSmall { width: w, height: h, min: scale });
    }
    let small = resample(img, w / scale, h / scale, p.filter_down);
    Ok(resample(&small, w, h, p.filter_up))
}

/// Additive i.i.d. Gaussian noise, drawn in raster order.
pub fn degrade_noise(img: &ImageF32, p: &NoiseParams, rng: &mut RngStream) -> ImageF32 {
    if p.sigma255 == 0.0 {
        return img.clone();
    }
    let sigma = p.sigma255 / 255.0;
    let data: Vec<f64> = img.data().iter().map(|&s| s as f64 + sigma * rng.normal()).collect();
    ImageF32::from_f64_clamped(img.width(), img.height(), &data)
}

pub fn degrade_jpeg(img: &ImageF32, p: &CompressionParams) -> Result<ImageF32> {
    let stream = jpeg::encode(img, p.quality)?;
    let out = jpeg::decode(&stream)?;
    debug_assert_eq!(out.dims(), img.dims());
    Ok(out)
}

const RL_EPSILON: f64 = 1e-6;

fn rl_psf(psf_sigma: f64) -> Result<Kernel2D> {
    let ksize = 2 * (3.0 * psf_sigma).ceil() as usize + 1;
    if psf_sigma == 0.0 || ksize == 1 {
        return Ok(Kernel2D::identity());
    }
    gaussian_kernel(ksize, psf_sigma)
}

/// One multiplicative Richardson–Lucy update on a single plane:
/// `u · ((obs / max(u ⊛ P, ε)) ⊛ Pᶠˡⁱᵖ)`.
pub fn richardson_lucy_step(u: &[f64], obs: &[f64], width: usize, height: usize, psf: &Kernel2D) -> Vec<f64> {
    let flipped = psf.flipped();
    let est = correlate_plane(u, width, height, psf);
    let ratio: Vec<f64> = obs.iter().zip(&est).map(|(&o, &e)| o / e.max(RL_EPSILON)).collect();
    let corr = correlate_plane(&ratio, width, height, &flipped);
    u.iter().zip(&corr).map(|(&a, &b)| a * b).collect()
}

/// Richardson–Lucy deconvolution of the image against a Gaussian PSF it was
/// never blurred with, which over-sharpens into grain and ringing.
pub fn degrade_alg_artifact(img: &ImageF32, p: &AlgArtifactParams) -> Result<ImageF32> {
    if p.iterations == 0 {
        return Err(Error::InvalidParam("Richardson-Lucy needs at least one iteration".into()));
    }
    let psf = rl_psf(p.psf_sigma)?;
    if psf.size() == 1 {
        return Ok(img.clone());
    }
    let (w, h) = img.dims();
    let planes = img.planes().map(|obs| {
        let mut u = obs.clone();
        for _ in 0..p.iterations {
            u = richardson_lucy_step(&u, &obs, w, h, &psf);
        }
        u
    });
    Ok(ImageF32::from_planes_clamped(w, h, &planes))
}

fn segment_distance_sq(px: f64, py: f64, (x0, y0): (f64, f64), (x1, y1): (f64, f64)) -> f64 {
    let (dx, dy) = (x1 - x0, y1 - y0);
    let len_sq = dx * dx + dy * dy;
    let t = if len_sq == 0.0 {
        0.0
    } else {
        (((px - x0) * dx + (py - y0) * dy) / len_sq).clamp(0.0, 1.0)
    };
    let (cx, cy) = (x0 + t * dx - px, y0 + t * dy - py);
    cx * cx + cy * cy
}

/// Straight scratches with uniform random endpoints, swept with a disc of
/// diameter `thickness`.
pub fn degrade_damage(img: &ImageF32, p: &DamageParams, rng: &mut RngStream) -> Result<ImageF32> {
    if p.thickness == 0 {
        return Err(Error::InvalidParam("damage thickness must be >= 1".into()));
    }
    let (w, h) = img.dims();
    let radius = p.thickness as f64 / 2.0;
    let value = p.color.value();
    let mut data = img.data().to_vec();
    for _ in 0..p.n_lines {
        let a = (rng.uniform(0.0, w as f64), rng.uniform(0.0, h as f64));
        let b = (rng.uniform(0.0, w as f64), rng.uniform(0.0, h as f64));
        let x_lo = (a.0.min(b.0) - radius).floor().max(0.0) as usize;
        let x_hi = ((a.0.max(b.0) + radius).ceil() as usize).min(w - 1);
        let y_lo = (a.1.min(b.1) - radius).floor().max(0.0) as usize;
        let y_hi = ((a.1.max(b.1) + radius).ceil() as usize).min(h - 1);
        for y in y_lo..=y_hi {
            for x in x_lo..=x_hi {
                if segment_distance_sq(x as f64, y as f64, a, b) <= radius * radius {
                    data[(y * w + x) * CHANNELS..][..CHANNELS].fill(value);
                }
            }
        }
    }
    ImageF32::new(w, h, data)
}

const RAIN_DROPLET_DENSITY: f64 = 0.025;
const RAIN_OPACITY: f64 = 0.8;
/// Levels applied to the blurred droplet layer, in units of a lone streak's
/// peak response.
const RAIN_LEVELS: (f64, f64) = (0.15, 1.0);

/// Normalized line kernel of the given length and angle (degrees from the
/// +x axis, y pointing down), built by bilinear splatting along the segment.
fn motion_kernel(length: usize, angle_deg: f64) -> Result<Kernel2D> {
    let half = (length as f64 - 1.0) / 2.0;
    let radius = half.ceil() as usize + 1;
    let size = 2 * radius + 1;
    let mut weights = vec![0.0f64; size * size];
    let (s, c) = angle_deg.to_radians().sin_cos();
    let samples = 4 * length + 1;
    let w = 1.0 / samples as f64;
    for i in 0..samples {
        let t = if samples == 1 { 0.0 } else { -half + 2.0 * half * i as f64 / (samples - 1) as f64 };
        let x = radius as f64 + t * c;
        let y = radius as f64 + t * s;
        let (x0, y0) = (x.floor(), y.floor());
        let (fx, fy) = (x - x0, y - y0);
        let (x0, y0) = (x0 as usize, y0 as usize);
        weights[y0 * size + x0] += w * (1.0 - fx) * (1.0 - fy);
        weights[y0 * size + x0 + 1] += w * fx * (1.0 - fy);
        weights[(y0 + 1) * size + x0] += w * (1.0 - fx) * fy;
        weights[(y0 + 1) * size + x0 + 1] += w * fx * fy;
    }
    let sum: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|v| *v /= sum);
    Kernel2D::new(size, weights)
}

/// Streak intensity in `[0, 1]` per pixel: sparse droplets, motion-blurred
/// along one random near-vertical angle, then contrast-stretched.
pub fn rain_streak_layer(width: usize, height: usize, strength: f64, rng: &mut RngStream) -> Vec<f64> {
    let length = (strength / 5.0).round() as usize;
    let density = strength / 100.0 * RAIN_DROPLET_DENSITY;
    if length == 0 || density <= 0.0 {
        return vec![0.0; width * height];
    }
    let angle = rng.uniform(60.0, 120.0);
    let droplets: Vec<f64> = (0..width * height)
        .map(|_| if rng.next_f64() < density { 1.0 } else { 0.0 })
        .collect();
    let kernel = motion_kernel(length, angle).expect("motion kernel is normalized");
    let blurred = correlate_plane(&droplets, width, height, &kernel);
    let (lo, hi) = RAIN_LEVELS;
    blurred
        .into_iter()
        .map(|b| ((b * length as f64 - lo) / (hi - lo)).clamp(0.0, 1.0))
        .collect()
}

/// Screen-blends a white streak layer: `1 − (1 − img)(1 − 0.8·streak)`.
pub fn degrade_rain(img: &ImageF32, p: &RainParams, rng: &mut RngStream) -> ImageF32 {
    let (w, h) = img.dims();
    let streak = rain_streak_layer(w, h, p.strength, rng);
    if streak.iter().all(|&s| s == 0.0) {
        return img.clone();
    }
    let data: Vec<f64> = img
        .data()
        .chunks_exact(CHANNELS)
        .zip(&streak)
        .flat_map(|(px, &s)| {
            // written as img + (1 − img)·α so it can never darken
            px.iter().map(move |&v| {
                let v = v as f64;
                v + (1.0 - v) * (RAIN_OPACITY * s)
            })
        })
        .collect();
    ImageF32::from_f64_clamped(w, h, &data)
}
