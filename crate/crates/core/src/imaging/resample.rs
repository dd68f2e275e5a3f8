use serde::{Deserialize, Serialize};

use super::{ImageF32, CHANNELS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResampleFilter {
    Nearest,
    Bilinear,
    Bicubic,
}

const KEYS_A: f64 = -0.5;

fn keys_cubic(x: f64) -> f64 {
    let x = x.abs();
    if x < 1.0 {
        ((KEYS_A + 2.0) * x - (KEYS_A + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((KEYS_A * x - 5.0 * KEYS_A) * x + 8.0 * KEYS_A) * x - 4.0 * KEYS_A
    } else {
        0.0
    }
}

fn triangle(x: f64) -> f64 {
    (1.0 - x.abs()).max(0.0)
}

impl ResampleFilter {
    fn support(self) -> f64 {
        match self {
            ResampleFilter::Nearest => 0.5,
            ResampleFilter::Bilinear => 1.0,
            ResampleFilter::Bicubic => 2.0,
        }
    }

    fn eval(self, x: f64) -> f64 {
        match self {
            ResampleFilter::Nearest => unreachable!("nearest is sampled directly"),
            ResampleFilter::Bilinear => triangle(x),
            ResampleFilter::Bicubic => keys_cubic(x),
        }
    }
}

/// Source taps for one output coordinate.
struct Taps {
    index: Vec<usize>,
    weight: Vec<f64>,
}

/// Half-pixel-centered weights along one axis. When shrinking, the filter is
/// stretched by the scale factor so it also acts as the anti-alias prefilter.
fn axis_taps(in_len: usize, out_len: usize, filter: ResampleFilter) -> Vec<Taps> {
    let scale = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|o| {
            let center = (o as f64 + 0.5) * scale;
            if filter == ResampleFilter::Nearest {
                let i = (center.floor() as usize).min(in_len - 1);
                return Taps {
                    index: vec![i],
                    weight: vec![1.0],
                };
            }
            let stretch = scale.max(1.0);
            let reach = filter.support() * stretch;
            let lo = (center - reach).floor() as isize;
            let hi = (center + reach).ceil() as isize;
            let mut index = Vec::new();
            let mut weight = Vec::new();
            for i in lo..=hi {
                let w = filter.eval((i as f64 + 0.5 - center) / stretch);
                if w == 0.0 {
                    continue;
                }
                index.push(i.clamp(0, in_len as isize - 1) as usize);
                weight.push(w);
            }
            let sum: f64 = weight.iter().sum();
            weight.iter_mut().for_each(|w| *w /= sum);
            Taps { index, weight }
        })
        .collect()
}

/// Separable resampling to `out_w`×`out_h`; output clamped to `[0, 1]`.
pub fn resample(img: &ImageF32, out_w: usize, out_h: usize, filter: ResampleFilter) -> ImageF32 {
    assert!(out_w >= 1 && out_h >= 1, "output dimensions must be at least 1x1");
    let (w, h) = img.dims();
    if (w, h) == (out_w, out_h) {
        return img.clone();
    }
    let xt = axis_taps(w, out_w, filter);
    let yt = axis_taps(h, out_h, filter);

    // horizontal pass: h rows × out_w
    let src = img.data();
    let mut tmp = vec![0.0f64; h * out_w * CHANNELS];
    for y in 0..h {
        for (ox, taps) in xt.iter().enumerate() {
            let mut acc = [0.0f64; CHANNELS];
            for (&i, &wgt) in taps.index.iter().zip(&taps.weight) {
                let p = (y * w + i) * CHANNELS;
                for c in 0..CHANNELS {
                    acc[c] += wgt * src[p + c] as f64;
                }
            }
            tmp[(y * out_w + ox) * CHANNELS..][..CHANNELS].copy_from_slice(&acc);
        }
    }

    let mut out = vec![0.0f64; out_h * out_w * CHANNELS];
    for (oy, taps) in yt.iter().enumerate() {
        let dst = &mut out[oy * out_w * CHANNELS..(oy + 1) * out_w * CHANNELS];
        for (&i, &wgt) in taps.index.iter().zip(&taps.weight) {
            let row = &tmp[i * out_w * CHANNELS..(i + 1) * out_w * CHANNELS];
            for (d, s) in dst.iter_mut().zip(row) {
                *d += wgt * s;
            }
        }
    }
    ImageF32::from_f64_clamped(out_w, out_h, &out)
}
