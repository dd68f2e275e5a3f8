//! Atmospheric scattering (haze) and procedural snow.

use super::{HazeParams, SnowParams};
use crate::error::{Error, Result};
use crate::imaging::{DepthMap, ImageF32, CHANNELS};
use crate::rng::RngStream;

pub const SNOW_FLAKES_PER_MPX: f64 = 200.0;
const FLAKE_RADIUS: (f64, f64) = (1.0, 4.0);
const FLAKE_INTENSITY: (f64, f64) = (0.6, 1.0);
const FLAKE_COLOR: [f64; 3] = [0.95, 0.97, 1.0];
const FLAKE_MIN_SPACING: f64 = 6.0;
const FLAKE_PLACEMENT_TRIES: usize = 10;

fn check_depth(img: &ImageF32, depth: &DepthMap) -> Result<()> {
    if img.dims() != depth.dims() {
        return Err(Error::DimensionMismatch {
            expected: img.dims(),
            actual: depth.dims(),
        });
    }
    Ok(())
}

/// `out = I·t + A·(1 − t)` with `t = exp(−β·d)`.
fn veil(samples: &[f64], depth: &DepthMap, a: f64, beta: f64) -> Vec<f64> {
    samples
        .chunks_exact(CHANNELS)
        .zip(depth.data())
        .flat_map(|(px, &d)| {
            let t = (-beta * d as f64).exp();
            px.iter().map(move |&v| v * t + a * (1.0 - t))
        })
        .collect()
}

pub fn degrade_haze(img: &ImageF32, depth: &DepthMap, p: &HazeParams) -> Result<ImageF32> {
    check_depth(img, depth)?;
    let samples: Vec<f64> = img.data().iter().map(|&v| v as f64).collect();
    let out = veil(&samples, depth, p.a, p.beta);
    Ok(ImageF32::from_f64_clamped(img.width(), img.height(), &out))
}

/// Binary flake mask `R` and per-pixel flake intensity `Z` (zero off-mask).
#[derive(Clone, Debug, PartialEq)]
pub struct SnowLayer {
    pub width: usize,
    pub height: usize,
    pub mask: Vec<bool>,
    pub intensity: Vec<f64>,
}

impl SnowLayer {
    pub fn covered_fraction(&self) -> f64 {
        self.mask.iter().filter(|&&m| m).count() as f64 / self.mask.len() as f64
    }
}

/// Spaced-out random flake centers, each rendered as a Gaussian blob whose
/// 0.5 level sits at the flake radius.
pub fn snow_layer(width: usize, height: usize, flakes_per_mpx: f64, rng: &mut RngStream) -> SnowLayer {
    let n = (flakes_per_mpx * (width * height) as f64 / 1e6).round() as usize;
    let mut centers: Vec<(f64, f64)> = Vec::with_capacity(n);
    for _ in 0..n {
        let mut candidate = (0.0, 0.0);
        for _ in 0..FLAKE_PLACEMENT_TRIES {
            candidate = (rng.uniform(0.0, width as f64), rng.uniform(0.0, height as f64));
            let clear = centers.iter().all(|&(x, y)| {
                let (dx, dy) = (x - candidate.0, y - candidate.1);
                dx * dx + dy * dy >= FLAKE_MIN_SPACING * FLAKE_MIN_SPACING
            });
            if clear {
                break;
            }
        }
        centers.push(candidate);
    }

    let mut mask = vec![false; width * height];
    let mut intensity = vec![0.0f64; width * height];
    let ln2 = std::f64::consts::LN_2;
    for &(cx, cy) in &centers {
        let r = rng.uniform(FLAKE_RADIUS.0, FLAKE_RADIUS.1);
        let z = rng.uniform(FLAKE_INTENSITY.0, FLAKE_INTENSITY.1);
        let sigma_sq = r * r / (2.0 * ln2);
        let x_lo = (cx - r).floor().max(0.0) as usize;
        let y_lo = (cy - r).floor().max(0.0) as usize;
        let x_hi = ((cx + r).ceil() as usize).min(width - 1);
        let y_hi = ((cy + r).ceil() as usize).min(height - 1);
        for y in y_lo..=y_hi {
            for x in x_lo..=x_hi {
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                let blob = (-(dx * dx + dy * dy) / (2.0 * sigma_sq)).exp();
                if blob >= 0.5 {
                    let i = y * width + x;
                    mask[i] = true;
                    intensity[i] = intensity[i].max(z);
                }
            }
        }
    }
    SnowLayer {
        width,
        height,
        mask,
        intensity,
    }
}

pub fn degrade_snow(img: &ImageF32, depth: &DepthMap, p: &SnowParams, rng: &mut RngStream) -> Result<ImageF32> {
    degrade_snow_with_density(img, depth, p, SNOW_FLAKES_PER_MPX, rng)
}

/// Snow with an explicit flake density; a density of zero reduces to haze.
///
/// `I_s = I·(1 − Z·R) + C·Z·R` with chromatic map `C = color·Z`, followed by
/// the same veil as haze.
pub fn degrade_snow_with_density(
    img: &ImageF32,
    depth: &DepthMap,
    p: &SnowParams,
    flakes_per_mpx: f64,
    rng: &mut RngStream,
) -> Result<ImageF32> {
    check_depth(img, depth)?;
    let (w, h) = img.dims();
    let layer = snow_layer(w, h, flakes_per_mpx, rng);
    let mut samples: Vec<f64> = img.data().iter().map(|&v| v as f64).collect();
    for (i, px) in samples.chunks_exact_mut(CHANNELS).enumerate() {
        if !layer.mask[i] {
            continue;
        }
        let z = layer.intensity[i];
        for (v, color) in px.iter_mut().zip(FLAKE_COLOR) {
            let c = color * z;
            *v = *v * (1.0 - z) + c * z;
        }
    }
    let out = veil(&samples, depth, p.a, p.beta);
    Ok(ImageF32::from_f64_clamped(w, h, &out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_image(w: usize, h: usize, seed: u64) -> ImageF32 {
        let mut rng = RngStream::from_seed(seed);
        ImageF32::from_fn(w, h, |_, _, _| rng.next_f64() as f32)
    }

    #[test]
    fn haze_zero_depth_is_identity() {
        let img = random_image(20, 10, 1);
        let d = DepthMap::constant(20, 10, 0.0);
        assert_eq!(degrade_haze(&img, &d, &HazeParams { a: 0.9, beta: 1.8 }).unwrap(), img);
    }

    #[test]
    fn haze_formula_values() {
        let img = ImageF32::filled(4, 4, [0.5; 3]);
        let d = DepthMap::constant(4, 4, 1.0);
        let out = degrade_haze(&img, &d, &HazeParams { a: 1.0, beta: std::f64::consts::LN_2 }).unwrap();
        assert!(out.data().iter().all(|&v| (v - 0.75).abs() < 1e-6));

        let d = DepthMap::constant(4, 4, 10.0);
        let out = degrade_haze(&random_image(4, 4, 2), &d, &HazeParams { a: 0.85, beta: 2.5 }).unwrap();
        assert!(out.data().iter().all(|&v| (v - 0.85).abs() < 1e-6));
    }

    #[test]
    fn depth_dimensions_must_match() {
        let img = ImageF32::filled(4, 4, [0.5; 3]);
        let d = DepthMap::constant(4, 5, 1.0);
        let p = HazeParams { a: 0.9, beta: 1.0 };
        assert!(matches!(degrade_haze(&img, &d, &p), Err(Error::DimensionMismatch { .. })));
        let s = SnowParams { a: 0.9, beta: 0.75 };
        let r = degrade_snow(&img, &d, &s, &mut RngStream::from_seed(0));
        assert!(matches!(r, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn flakeless_snow_is_haze() {
        let img = random_image(32, 24, 3);
        let mut drng = RngStream::from_seed(8);
        let d = DepthMap::new(32, 24, (0..32 * 24).map(|_| drng.next_f64() as f32).collect()).unwrap();
        let s = SnowParams { a: 0.9, beta: 0.75 };
        let snow = degrade_snow_with_density(&img, &d, &s, 0.0, &mut RngStream::from_seed(1)).unwrap();
        let haze = degrade_haze(&img, &d, &HazeParams { a: 0.9, beta: 0.75 }).unwrap();
        assert_eq!(snow, haze);

        let zero = DepthMap::constant(32, 24, 0.0);
        let out = degrade_snow_with_density(&img, &zero, &s, 0.0, &mut RngStream::from_seed(1)).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn snow_is_deterministic_and_brightens_flakes() {
        let img = ImageF32::filled(256, 256, [0.2; 3]);
        let d = DepthMap::constant(256, 256, 0.0);
        let s = SnowParams { a: 0.9, beta: 0.75 };
        let a = degrade_snow(&img, &d, &s, &mut RngStream::from_seed(4)).unwrap();
        let b = degrade_snow(&img, &d, &s, &mut RngStream::from_seed(4)).unwrap();
        assert_eq!(a, b);
        assert!(a.data().iter().any(|&v| v > 0.5));
    }

    #[test]
    fn default_density_coverage_envelope() {
        for seed in 0..50 {
            let layer = snow_layer(512, 512, SNOW_FLAKES_PER_MPX, &mut RngStream::from_seed(seed));
            let f = layer.covered_fraction();
            assert!(f > 0.002 && f < 0.08, "seed {seed}: {f}");
        }
    }
}
