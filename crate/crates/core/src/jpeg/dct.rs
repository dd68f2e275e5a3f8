//! Orthonormal 8×8 type-II DCT and its inverse, in f64.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::sync::OnceLock;

/// `basis[u][x] = ½·C(u)·cos((2x+1)uπ/16)`, `C(0) = 1/√2`, else 1.
fn basis() -> &'static [[f64; 8]; 8] {
    static BASIS: OnceLock<[[f64; 8]; 8]> = OnceLock::new();
    BASIS.get_or_init(|| {
        let mut b = [[0.0; 8]; 8];
        for (u, row) in b.iter_mut().enumerate() {
            let cu = if u == 0 { FRAC_1_SQRT_2 } else { 1.0 };
            for (x, v) in row.iter_mut().enumerate() {
                *v = 0.5 * cu * (((2 * x + 1) * u) as f64 * PI / 16.0).cos();
            }
        }
        b
    })
}

/// 1-D forward transform. Even outputs go through sum/difference butterflies
/// so a constant input yields exact zeros for every non-DC coefficient.
fn fdct_1d(f: [f64; 8]) -> [f64; 8] {
    let b = basis();
    let s = [f[0] + f[7], f[1] + f[6], f[2] + f[5], f[3] + f[4]];
    let d = [f[0] - f[7], f[1] - f[6], f[2] - f[5], f[3] - f[4]];
    let (t0, t1) = (s[0] + s[3], s[1] + s[2]);
    let (e0, e1) = (s[0] - s[3], s[1] - s[2]);
    let mut out = [0.0; 8];
    out[0] = b[0][0] * (t0 + t1);
    out[4] = b[4][0] * (t0 - t1);
    out[2] = b[2][0] * e0 + b[2][1] * e1;
    out[6] = b[6][0] * e0 + b[6][1] * e1;
    for u in [1, 3, 5, 7] {
        out[u] = (0..4).map(|x| b[u][x] * d[x]).sum();
    }
    out
}

fn idct_1d(c: [f64; 8]) -> [f64; 8] {
    let b = basis();
    let mut out = [0.0; 8];
    for (x, o) in out.iter_mut().enumerate() {
        *o = (0..8).map(|u| b[u][x] * c[u]).sum();
    }
    out
}

fn separable(block: &[f64; 64], f: fn([f64; 8]) -> [f64; 8]) -> [f64; 64] {
    let mut tmp = [0.0; 64];
    for r in 0..8 {
        let row: [f64; 8] = block[r * 8..r * 8 + 8].try_into().unwrap();
        tmp[r * 8..r * 8 + 8].copy_from_slice(&f(row));
    }
    let mut out = [0.0; 64];
    for c in 0..8 {
        let col = std::array::from_fn(|r| tmp[r * 8 + c]);
        for (r, v) in f(col).into_iter().enumerate() {
            out[r * 8 + c] = v;
        }
    }
    out
}

/// Forward DCT of a row-major block; output is row-major `[v][u]`.
pub fn fdct8x8(block: &[f64; 64]) -> [f64; 64] {
    separable(block, fdct_1d)
}

pub fn idct8x8(coeffs: &[f64; 64]) -> [f64; 64] {
    separable(coeffs, idct_1d)
}
