//! The ten basic degradation operators, their parameters, and sampling.

mod kernels;
mod ops;
mod weather;

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{DepthMap, ImageF32, ResampleFilter};
use crate::rng::RngStream;

pub use kernels::{bessel_j1, gaussian_kernel, sinc_kernel};
pub use ops::{
    degrade_alg_artifact, degrade_blur, degrade_damage, degrade_jpeg, degrade_noise, degrade_rain,
    degrade_resize, degrade_ringing, rain_streak_layer, richardson_lucy_step,
};
pub use weather::{degrade_haze, degrade_snow, degrade_snow_with_density, snow_layer, SnowLayer, SNOW_FLAKES_PER_MPX};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegradationKind {
    Resize,
    Blur,
    Noise,
    Compression,
    Ringing,
    AlgArtifact,
    Damage,
    Rain,
    Haze,
    Snow,
}

impl DegradationKind {
    pub const ALL: [DegradationKind; 10] = [
        DegradationKind::Resize,
        DegradationKind::Blur,
        DegradationKind::Noise,
        DegradationKind::Compression,
        DegradationKind::Ringing,
        DegradationKind::AlgArtifact,
        DegradationKind::Damage,
        DegradationKind::Rain,
        DegradationKind::Haze,
        DegradationKind::Snow,
    ];

    /// Weather degradations may only appear as the first step of a recipe.
    pub fn weather_only_first(self) -> bool {
        matches!(self, DegradationKind::Rain | DegradationKind::Haze | DegradationKind::Snow)
    }

    pub fn needs_depth(self) -> bool {
        matches!(self, DegradationKind::Haze | DegradationKind::Snow)
    }

    pub fn name(self) -> &'static str {
        match self {
            DegradationKind::Resize => "resize",
            DegradationKind::Blur => "blur",
            DegradationKind::Noise => "noise",
            DegradationKind::Compression => "compression",
            DegradationKind::Ringing => "ringing",
            DegradationKind::AlgArtifact => "alg_artifact",
            DegradationKind::Damage => "damage",
            DegradationKind::Rain => "rain",
            DegradationKind::Haze => "haze",
            DegradationKind::Snow => "snow",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

impl fmt::Display for DegradationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for DegradationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::from_name(s).ok_or_else(|| Error::InvalidParam(format!("unknown degradation kind '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResizeParams {
    pub scale: u32,
    pub filter_down: ResampleFilter,
    pub filter_up: ResampleFilter,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlurParams {
    pub ksize: usize,
    pub sigma: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseParams {
    /// Standard deviation on the 0–255 scale.
    pub sigma255: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompressionParams {
    pub quality: u8,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RingingParams {
    pub ksize: usize,
    pub omega: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgArtifactParams {
    pub psf_sigma: f64,
    pub iterations: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LineColor {
    White,
    Black,
}

impl LineColor {
    pub fn value(self) -> f32 {
        match self {
            LineColor::White => 1.0,
            LineColor::Black => 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DamageParams {
    pub n_lines: u32,
    pub thickness: u32,
    pub color: LineColor,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RainParams {
    pub strength: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HazeParams {
    /// Global atmospheric light.
    #[serde(rename = "A")]
    pub a: f64,
    /// Scattering coefficient.
    pub beta: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnowParams {
    #[serde(rename = "A")]
    pub a: f64,
    pub beta: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DegradationParams {
    Resize(ResizeParams),
    Blur(BlurParams),
    Noise(NoiseParams),
    Compression(CompressionParams),
    Ringing(RingingParams),
    AlgArtifact(AlgArtifactParams),
    Damage(DamageParams),
    Rain(RainParams),
    Haze(HazeParams),
    Snow(SnowParams),
}

const KSIZE_RANGE: (usize, usize) = (7, 23);

fn within(v: f64, lo: f64, hi: f64) -> bool {
    v >= lo && v <= hi
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParam(msg.into())
}

impl DegradationParams {
    pub fn kind(&self) -> DegradationKind {
        match self {
            DegradationParams::Resize(_) => DegradationKind::Resize,
            DegradationParams::Blur(_) => DegradationKind::Blur,
            DegradationParams::Noise(_) => DegradationKind::Noise,
            DegradationParams::Compression(_) => DegradationKind::Compression,
            DegradationParams::Ringing(_) => DegradationKind::Ringing,
            DegradationParams::AlgArtifact(_) => DegradationKind::AlgArtifact,
            DegradationParams::Damage(_) => DegradationKind::Damage,
            DegradationParams::Rain(_) => DegradationKind::Rain,
            DegradationParams::Haze(_) => DegradationKind::Haze,
            DegradationParams::Snow(_) => DegradationKind::Snow,
        }
    }

    /// Checks that the operator can run with these values. This is looser than
    /// [`in_sampling_range`](Self::in_sampling_range): degenerate settings such
    /// as zero noise or zero rain strength are accepted.
    pub fn validate(&self) -> Result<()> {
        match *self {
            DegradationParams::Resize(p) => {
                if p.scale != 4 {
                    return Err(invalid(format!("resize scale must be 4, got {}", p.scale)));
                }
            }
            DegradationParams::Blur(p) => {
                if p.ksize % 2 == 0 {
                    return Err(invalid(format!("blur ksize {} must be odd", p.ksize)));
                }
                if !(p.sigma > 0.0 && p.sigma.is_finite()) {
                    return Err(invalid(format!("blur sigma must be positive, got {}", p.sigma)));
                }
            }
            DegradationParams::Noise(p) => {
                if !(p.sigma255 >= 0.0 && p.sigma255.is_finite()) {
                    return Err(invalid(format!("noise sigma255 must be >= 0, got {}", p.sigma255)));
                }
            }
            DegradationParams::Compression(p) => {
                if !(1..=100).contains(&p.quality) {
                    return Err(invalid(format!("jpeg quality must be in [1, 100], got {}", p.quality)));
                }
            }
            DegradationParams::Ringing(p) => {
                if p.ksize % 2 == 0 {
                    return Err(invalid(format!("ringing ksize {} must be odd", p.ksize)));
                }
                if !(p.omega > 0.0 && p.omega <= PI) {
                    return Err(invalid(format!("ringing omega must be in (0, π], got {}", p.omega)));
                }
            }
            DegradationParams::AlgArtifact(p) => {
                if !(p.psf_sigma >= 0.0 && p.psf_sigma.is_finite()) {
                    return Err(invalid(format!("psf_sigma must be >= 0, got {}", p.psf_sigma)));
                }
                if p.iterations == 0 {
                    return Err(invalid("Richardson-Lucy needs at least one iteration"));
                }
            }
            DegradationParams::Damage(p) => {
                if p.thickness == 0 {
                    return Err(invalid("damage thickness must be >= 1"));
                }
            }
            DegradationParams::Rain(p) => {
                if !(p.strength >= 0.0 && p.strength.is_finite()) {
                    return Err(invalid(format!("rain strength must be >= 0, got {}", p.strength)));
                }
            }
            DegradationParams::Haze(HazeParams { a, beta }) | DegradationParams::Snow(SnowParams { a, beta }) => {
                if !within(a, 0.0, 1.0) {
                    return Err(invalid(format!("atmospheric light A must be in [0, 1], got {a}")));
                }
                if !(beta >= 0.0 && beta.is_finite()) {
                    return Err(invalid(format!("beta must be >= 0, got {beta}")));
                }
            }
        }
        Ok(())
    }

    /// Whether every field lies inside its random-sampling range.
    pub fn in_sampling_range(&self) -> bool {
        let odd_ksize = |k: usize| k % 2 == 1 && (KSIZE_RANGE.0..=KSIZE_RANGE.1).contains(&k);
        match *self {
            DegradationParams::Resize(p) => {
                p.scale == 4 && p.filter_down == ResampleFilter::Bicubic && p.filter_up == ResampleFilter::Bicubic
            }
            DegradationParams::Blur(p) => odd_ksize(p.ksize) && within(p.sigma, 0.2, 3.0),
            DegradationParams::Noise(p) => within(p.sigma255, 1.0, 30.0),
            DegradationParams::Compression(p) => (30..=95).contains(&p.quality),
            DegradationParams::Ringing(p) => odd_ksize(p.ksize) && within(p.omega, PI / 3.0, PI),
            DegradationParams::AlgArtifact(p) => within(p.psf_sigma, 0.8, 2.0) && (5..=30).contains(&p.iterations),
            DegradationParams::Damage(p) => (5..=10).contains(&p.n_lines) && (5..=10).contains(&p.thickness),
            DegradationParams::Rain(p) => within(p.strength, 50.0, 100.0),
            DegradationParams::Haze(p) => within(p.a, 0.8, 1.0) && within(p.beta, 0.5, 2.5),
            DegradationParams::Snow(p) => within(p.a, 0.8, 0.95) && within(p.beta, 0.5, 1.0),
        }
    }

    /// The parameter object as JSON (without the kind tag).
    pub fn to_json(&self) -> serde_json::Value {
        let v = match self {
            DegradationParams::Resize(p) => serde_json::to_value(p),
            DegradationParams::Blur(p) => serde_json::to_value(p),
            DegradationParams::Noise(p) => serde_json::to_value(p),
            DegradationParams::Compression(p) => serde_json::to_value(p),
            DegradationParams::Ringing(p) => serde_json::to_value(p),
            DegradationParams::AlgArtifact(p) => serde_json::to_value(p),
            DegradationParams::Damage(p) => serde_json::to_value(p),
            DegradationParams::Rain(p) => serde_json::to_value(p),
            DegradationParams::Haze(p) => serde_json::to_value(p),
            DegradationParams::Snow(p) => serde_json::to_value(p),
        };
        v.expect("parameter structs always serialize")
    }

    /// Parses the parameter object for `kind`. Unknown or missing fields are errors.
    pub fn from_json(kind: DegradationKind, value: serde_json::Value) -> std::result::Result<Self, serde_json::Error> {
        use serde_json::from_value as fv;
        Ok(match kind {
            DegradationKind::Resize => DegradationParams::Resize(fv(value)?),
            DegradationKind::Blur => DegradationParams::Blur(fv(value)?),
            DegradationKind::Noise => DegradationParams::Noise(fv(value)?),
            DegradationKind::Compression => DegradationParams::Compression(fv(value)?),
            DegradationKind::Ringing => DegradationParams::Ringing(fv(value)?),
            DegradationKind::AlgArtifact => DegradationParams::AlgArtifact(fv(value)?),
            DegradationKind::Damage => DegradationParams::Damage(fv(value)?),
            DegradationKind::Rain => DegradationParams::Rain(fv(value)?),
            DegradationKind::Haze => DegradationParams::Haze(fv(value)?),
            DegradationKind::Snow => DegradationParams::Snow(fv(value)?),
        })
    }
}

fn odd_ksize(rng: &mut RngStream) -> usize {
    let n_odd = (KSIZE_RANGE.1 - KSIZE_RANGE.0) / 2 + 1;
    KSIZE_RANGE.0 + 2 * rng.below(n_odd as u64) as usize
}

/// Uniform draw from the random-task range of `kind`.
pub fn sample_params(kind: DegradationKind, rng: &mut RngStream) -> DegradationParams {
    match kind {
        DegradationKind::Resize => representative_params(kind),
        DegradationKind::Blur => DegradationParams::Blur(BlurParams {
            ksize: odd_ksize(rng),
            sigma: rng.uniform(0.2, 3.0),
        }),
        DegradationKind::Noise => DegradationParams::Noise(NoiseParams {
            sigma255: rng.uniform(1.0, 30.0),
        }),
        DegradationKind::Compression => DegradationParams::Compression(CompressionParams {
            quality: rng.int_inclusive(30, 95) as u8,
        }),
        DegradationKind::Ringing => DegradationParams::Ringing(RingingParams {
            ksize: odd_ksize(rng),
            omega: rng.uniform(PI / 3.0, PI),
        }),
        DegradationKind::AlgArtifact => DegradationParams::AlgArtifact(AlgArtifactParams {
            psf_sigma: rng.uniform(0.8, 2.0),
            iterations: rng.int_inclusive(5, 30) as u32,
        }),
        DegradationKind::Damage => DegradationParams::Damage(DamageParams {
            n_lines: rng.int_inclusive(5, 10) as u32,
            thickness: rng.int_inclusive(5, 10) as u32,
            color: if rng.below(2) == 0 { LineColor::White } else { LineColor::Black },
        }),
        DegradationKind::Rain => DegradationParams::Rain(RainParams {
            strength: rng.uniform(50.0, 100.0),
        }),
        DegradationKind::Haze => DegradationParams::Haze(HazeParams {
            a: rng.uniform(0.8, 1.0),
            beta: rng.uniform(0.5, 2.5),
        }),
        DegradationKind::Snow => DegradationParams::Snow(SnowParams {
            a: rng.uniform(0.8, 0.95),
            beta: rng.uniform(0.5, 1.0),
        }),
    }
}

/// Fixed parameters used for the single and representative-mixture tasks.
pub fn representative_params(kind: DegradationKind) -> DegradationParams {
    match kind {
        DegradationKind::Resize => DegradationParams::Resize(ResizeParams {
            scale: 4,
            filter_down: ResampleFilter::Bicubic,
            filter_up: ResampleFilter::Bicubic,
        }),
        DegradationKind::Blur => DegradationParams::Blur(BlurParams { ksize: 15, sigma: 2.0 }),
        DegradationKind::Noise => DegradationParams::Noise(NoiseParams { sigma255: 20.0 }),
        DegradationKind::Compression => DegradationParams::Compression(CompressionParams { quality: 50 }),
        DegradationKind::Ringing => DegradationParams::Ringing(RingingParams { ksize: 15, omega: 1.2 }),
        DegradationKind::AlgArtifact => DegradationParams::AlgArtifact(AlgArtifactParams {
            psf_sigma: 1.5,
            iterations: 10,
        }),
        DegradationKind::Damage => DegradationParams::Damage(DamageParams {
            n_lines: 10,
            thickness: 7,
            color: LineColor::White,
        }),
        DegradationKind::Rain => DegradationParams::Rain(RainParams { strength: 75.0 }),
        DegradationKind::Haze => DegradationParams::Haze(HazeParams { a: 0.9, beta: 1.8 }),
        DegradationKind::Snow => DegradationParams::Snow(SnowParams { a: 0.9, beta: 0.75 }),
    }
}

/// Runs one operator. `depth` is required for haze and snow.
pub fn apply_degradation(
    img: &ImageF32,
    params: &DegradationParams,
    depth: Option<&DepthMap>,
    rng: &mut RngStream,
) -> Result<ImageF32> {
    params.validate()?;
    let need_depth = || {
        depth.ok_or_else(|| invalid(format!("{} requires a depth map", params.kind())))
    };
    match params {
        DegradationParams::Resize(p) => degrade_resize(img, p),
        DegradationParams::Blur(p) => degrade_blur(img, p),
        DegradationParams::Noise(p) => Ok(degrade_noise(img, p, rng)),
        DegradationParams::Compression(p) => degrade_jpeg(img, p),
        DegradationParams::Ringing(p) => degrade_ringing(img, p),
        DegradationParams::AlgArtifact(p) => degrade_alg_artifact(img, p),
        DegradationParams::Damage(p) => degrade_damage(img, p, rng),
        DegradationParams::Rain(p) => Ok(degrade_rain(img, p, rng)),
        DegradationParams::Haze(p) => degrade_haze(img, need_depth()?, p),
        DegradationParams::Snow(p) => degrade_snow(img, need_depth()?, p, rng),
    }
}
