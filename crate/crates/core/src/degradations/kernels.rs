use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::imaging::Kernel2D;

fn check_ksize(ksize: usize) -> Result<()> {
    if ksize.is_multiple_of(2) {
        return Err(Error::InvalidParam(format!("kernel size {ksize} must be odd")));
    }
    Ok(())
}

/// Isotropic Gaussian, `exp(-(x²+y²) / 2σ²)` on integer offsets, normalized.
pub fn gaussian_kernel(ksize: usize, sigma: f64) -> Result<Kernel2D> {
    check_ksize(ksize)?;
    if sigma <= 0.0 || !sigma.is_finite() {
        return Err(Error::InvalidParam(format!("sigma must be positive, got {sigma}")));
    }
    let r = (ksize / 2) as i64;
    let taps: Vec<f64> = (-r..=r)
        .map(|x| (-((x * x) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    Kernel2D::separable(taps.into_iter().map(|t| t / sum).collect())
}

/// Circular ideal low-pass with cutoff `omega`, normalized:
/// `k(r) = ω J₁(ω r) / (2π r)`, with the `r → 0` limit `ω² / 4π` at the center.
pub fn sinc_kernel(ksize: usize, omega: f64) -> Result<Kernel2D> {
    check_ksize(ksize)?;
    if !(omega > 0.0 && omega <= PI) {
        return Err(Error::InvalidParam(format!("omega must be in (0, π], got {omega}")));
    }
    let raw = sinc_taps_unnormalized(ksize, omega);
    let sum: f64 = raw.iter().sum();
    Kernel2D::new(ksize, raw.into_iter().map(|t| t / sum).collect())
}

pub(crate) fn sinc_taps_unnormalized(ksize: usize, omega: f64) -> Vec<f64> {
    let r = (ksize / 2) as i64;
    let mut taps = Vec::with_capacity(ksize * ksize);
    for y in -r..=r {
        for x in -r..=r {
            let d = ((x * x + y * y) as f64).sqrt();
            taps.push(if d == 0.0 {
                omega * omega / (4.0 * PI)
            } else {
                omega * bessel_j1(omega * d) / (2.0 * PI * d)
            });
        }
    }
    taps
}

/// Bessel function of the first kind, order one.
///
/// Power series below |x| = 16, Hankel asymptotic expansion above; absolute
/// error is around 1e-11 or better everywhere.
pub fn bessel_j1(x: f64) -> f64 {
    let ax = x.abs();
    let v = if ax < 16.0 { j1_series(ax) } else { j1_asymptotic(ax) };
    if x < 0.0 {
        -v
    } else {
        v
    }
}

fn j1_series(x: f64) -> f64 {
    let half = x / 2.0;
    let q = -half * half;
    let mut term = half;
    let mut sum = term;
    let mut m = 0.0;
    loop {
        m += 1.0;
        term *= q / (m * (m + 1.0));
        sum += term;
        if term.abs() < 1e-17 * sum.abs().max(1e-300) {
            break;
        }
    }
    sum
}

fn j1_asymptotic(x: f64) -> f64 {
    // a_k(1) = Π_{j=1..k} (4 - (2j-1)²) / (k! 8^k)
    let mu = 4.0;
    let mut p = 0.0;
    let mut q = 0.0;
    let mut term = 1.0;
    let mut prev = f64::INFINITY;
    for k in 0..60 {
        if k > 0 {
            let odd = (2 * k - 1) as f64;
            term *= (mu - odd * odd) / (k as f64 * 8.0 * x);
        }
        if term.abs() > prev {
            break;
        }
        prev = term.abs();
        match k % 4 {
            0 => p += term,
            1 => q += term,
            2 => p -= term,
            _ => q -= term,
        }
        if term.abs() < 1e-17 {
            break;
        }
    }
    let chi = x - 0.75 * PI;
    (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
}
