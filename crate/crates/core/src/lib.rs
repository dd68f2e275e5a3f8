//! Degradation synthesis and benchmark protocol for general image restoration.
//!
//! The crate renders reproducible degraded test sets from ground-truth
//! images, selects representative mixture tasks by spectral clustering, and
//! scores restoration outputs with acceptance and excellence ratios.

pub mod datasetgen;
pub mod degradations;
pub mod error;
pub mod evaluation;
pub mod imaging;
pub mod jpeg;
pub mod parallel;
pub mod pipeline;
pub mod rng;
pub mod taskselect;

pub use error::{Error, Result};
pub use imaging::{DepthMap, ImageF32, Kernel2D};
pub use rng::{derive_rng, RngStream};
