//! Baseline sequential JPEG (JFIF) encoder and decoder.
//!
//! The encoder always writes 4:2:0 YCbCr with the Annex-K example tables
//! scaled by the usual IJG quality formula. The decoder accepts baseline
//! streams with any 1×1/2×1/2×2 sampling, grayscale, and restart intervals.

mod dct;
mod decoder;
pub mod entropy;
mod tables;

pub use dct::{fdct8x8, idct8x8};
pub use decoder::decode;
pub use tables::{CHROMA_QUANT, LUMA_QUANT, ZIGZAG};

use std::io::Write;

use crate::error::{Error, Result};
use crate::imaging::{rgb_to_ycbcr_px, ImageF32};
use entropy::{encode_block, BitWriter, HuffmanEncoder, HuffmanSpec};

/// Quantization tables in zig-zag order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuantTables {
    pub luma: [u16; 64],
    pub chroma: [u16; 64],
}

fn to_zigzag(natural: &[u16; 64]) -> [u16; 64] {
    std::array::from_fn(|i| natural[ZIGZAG[i]])
}

/// IJG scaling: `S = 5000/q` below 50, else `200 − 2q`;
/// entry = `clamp((base·S + 50) / 100, 1, 255)`.
pub fn quality_to_tables(quality: u8) -> Result<QuantTables> {
    if !(1..=100).contains(&quality) {
        return Err(Error::InvalidParam(format!("jpeg quality must be in [1, 100], got {quality}")));
    }
    let q = quality as u32;
    let scale = if q < 50 { 5000 / q } else { 200 - 2 * q };
    let scaled = |base: &[u16; 64]| -> [u16; 64] {
        let t: [u16; 64] = std::array::from_fn(|i| ((base[i] as u32 * scale + 50) / 100).clamp(1, 255) as u16);
        to_zigzag(&t)
    };
    Ok(QuantTables {
        luma: scaled(&LUMA_QUANT),
        chroma: scaled(&CHROMA_QUANT),
    })
}

/// Level-shifted planes on the 0–255 scale, padded by edge replication to a
/// multiple of 16, with chroma box-averaged to half resolution.
struct Planes {
    y: Vec<f64>,
    cb: Vec<f64>,
    cr: Vec<f64>,
    /// padded luma width/height
    pw: usize,
    ph: usize,
}

fn prepare_planes(img: &ImageF32) -> Planes {
    let (w, h) = img.dims();
    let pw = w.div_ceil(16) * 16;
    let ph = h.div_ceil(16) * 16;
    let mut full = [vec![0.0; pw * ph], vec![0.0; pw * ph], vec![0.0; pw * ph]];
    for y in 0..ph {
        for x in 0..pw {
            let p = img.pixel(x.min(w - 1), y.min(h - 1));
            let ycc = rgb_to_ycbcr_px([p[0] as f64, p[1] as f64, p[2] as f64]);
            for c in 0..3 {
                full[c][y * pw + x] = ycc[c] * 255.0 - 128.0;
            }
        }
    }
    let (cw, ch) = (pw / 2, ph / 2);
    let half = |plane: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; cw * ch];
        for y in 0..ch {
            for x in 0..cw {
                let i = 2 * y * pw + 2 * x;
                out[y * cw + x] = (plane[i] + plane[i + 1] + plane[i + pw] + plane[i + pw + 1]) / 4.0;
            }
        }
        out
    };
    let [yp, cb, cr] = full;
    Planes {
        cb: half(&cb),
        cr: half(&cr),
        y: yp,
        pw,
        ph,
    }
}

fn quantize_block(plane: &[f64], stride: usize, bx: usize, by: usize, table: &[u16; 64]) -> [i32; 64] {
    let block: [f64; 64] = std::array::from_fn(|i| plane[(by * 8 + i / 8) * stride + bx * 8 + i % 8]);
    let coeffs = fdct8x8(&block);
    std::array::from_fn(|k| {
        let v = (coeffs[ZIGZAG[k]] / table[k] as f64).round() as i32;
        if k == 0 {
            v.clamp(-1024, 1023)
        } else {
            v.clamp(-1023, 1023)
        }
    })
}

fn segment(out: &mut Vec<u8>, marker: u8, payload: &[u8]) {
    out.extend_from_slice(&[0xFF, marker]);
    out.extend_from_slice(&((payload.len() + 2) as u16).to_be_bytes());
    out.extend_from_slice(payload);
}

fn dht_payload(class: u8, id: u8, spec: &HuffmanSpec) -> Vec<u8> {
    let mut p = vec![class << 4 | id];
    p.extend_from_slice(&spec.bits);
    p.extend_from_slice(&spec.values);
    p
}

/// Encodes to a baseline JFIF byte stream.
pub fn encode(img: &ImageF32, quality: u8) -> Result<Vec<u8>> {
    let tables = quality_to_tables(quality)?;
    let (w, h) = img.dims();
    if w > u16::MAX as usize || h > u16::MAX as usize {
        return Err(Error::InvalidParam(format!("image {w}x{h} exceeds JPEG limits")));
    }
    let planes = prepare_planes(img);

    let mut out = Vec::new();
    out.extend_from_slice(&[0xFF, 0xD8]);
    segment(&mut out, 0xE0, b"JFIF\0\x01\x01\x00\x00\x01\x00\x01\x00\x00");
    let mut dqt = vec![0x00];
    dqt.extend(tables.luma.iter().map(|&v| v as u8));
    dqt.push(0x01);
    dqt.extend(tables.chroma.iter().map(|&v| v as u8));
    segment(&mut out, 0xDB, &dqt);
    let mut sof = vec![8];
    sof.extend_from_slice(&(h as u16).to_be_bytes());
    sof.extend_from_slice(&(w as u16).to_be_bytes());
    sof.extend_from_slice(&[3, 1, 0x22, 0, 2, 0x11, 1, 3, 0x11, 1]);
    segment(&mut out, 0xC0, &sof);
    let specs = [
        (0, 0, HuffmanSpec::dc_luma()),
        (1, 0, HuffmanSpec::ac_luma()),
        (0, 1, HuffmanSpec::dc_chroma()),
        (1, 1, HuffmanSpec::ac_chroma()),
    ];
    let mut dht = Vec::new();
    for (class, id, spec) in &specs {
        dht.extend(dht_payload(*class, *id, spec));
    }
    segment(&mut out, 0xC4, &dht);
    segment(&mut out, 0xDA, &[3, 1, 0x00, 2, 0x11, 3, 0x11, 0, 63, 0]);

    let dc_l = HuffmanEncoder::new(&specs[0].2);
    let ac_l = HuffmanEncoder::new(&specs[1].2);
    let dc_c = HuffmanEncoder::new(&specs[2].2);
    let ac_c = HuffmanEncoder::new(&specs[3].2);
    let mut bw = BitWriter::new();
    let mut pred = [0i32; 3];
    let cw = planes.pw / 2;
    for my in 0..planes.ph / 16 {
        for mx in 0..planes.pw / 16 {
            for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                let zz = quantize_block(&planes.y, planes.pw, 2 * mx + dx, 2 * my + dy, &tables.luma);
                encode_block(&mut bw, &zz, &mut pred[0], &dc_l, &ac_l);
            }
            let zz = quantize_block(&planes.cb, cw, mx, my, &tables.chroma);
            encode_block(&mut bw, &zz, &mut pred[1], &dc_c, &ac_c);
            let zz = quantize_block(&planes.cr, cw, mx, my, &tables.chroma);
            encode_block(&mut bw, &zz, &mut pred[2], &dc_c, &ac_c);
        }
    }
    out.extend(bw.finish());
    out.write_all(&[0xFF, 0xD9])?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::psnr;
    use crate::rng::RngStream;

    fn smooth(w: usize, h: usize, phase: f32) -> ImageF32 {
        ImageF32::from_fn(w, h, |x, y, c| {
            let (fx, fy) = (x as f32 / w as f32, y as f32 / h as f32);
            0.5 + 0.3 * (6.0 * fx + 4.0 * fy + phase + c as f32).sin() * (3.0 * fy - phase).cos()
        })
    }

    fn natural(t: &[u16; 64]) -> [u16; 64] {
        let mut n = [0; 64];
        for (k, &v) in t.iter().enumerate() {
            n[ZIGZAG[k]] = v;
        }
        n
    }

    #[test]
    fn quality_scaling() {
        let t50 = quality_to_tables(50).unwrap();
        assert_eq!(natural(&t50.luma), LUMA_QUANT);
        assert_eq!(natural(&t50.chroma), CHROMA_QUANT);
        let t100 = quality_to_tables(100).unwrap();
        assert!(t100.luma.iter().chain(&t100.chroma).all(|&v| v == 1));
        let t25 = natural(&quality_to_tables(25).unwrap().luma);
        for (v, b) in t25.iter().zip(LUMA_QUANT) {
            assert_eq!(*v, (b * 2).min(255));
        }
        assert!(quality_to_tables(0).is_err());
        assert!(quality_to_tables(101).is_err());
    }

    #[test]
    fn stream_framing() {
        let img = smooth(21, 13, 0.0);
        let s = encode(&img, 75).unwrap();
        assert_eq!(&s[..2], &[0xFF, 0xD8]);
        assert_eq!(&s[s.len() - 2..], &[0xFF, 0xD9]);
        assert_eq!(decode(&s).unwrap().dims(), (21, 13));
    }

    #[test]
    fn flat_gray_survives_quantization() {
        // A flat block is DC-only, so its error is at most half a DC step:
        // 8·(v−128) lands within Q_dc/2 of the original, i.e. Q_dc/16 levels.
        // Mid-gray sits at DC 0 and survives even quality 1; other levels
        // need Q_dc ≤ 32, which holds from quality 25 up.
        let mid = ImageF32::filled(24, 24, [0.5; 3]);
        for q in 1..=100 {
            let out = decode(&encode(&mid, q).unwrap()).unwrap();
            assert!(out.data().iter().all(|&v| (v - 0.5).abs() <= 2.0 / 255.0 + 1e-6), "q{q}");
        }
        for level in [0.0f32, 1.0, 77.0 / 255.0, 200.0 / 255.0] {
            let img = ImageF32::filled(24, 24, [level; 3]);
            for q in [25, 30, 50, 75, 95, 100] {
                let out = decode(&encode(&img, q).unwrap()).unwrap();
                let err = out.data().iter().map(|&v| (v - level).abs()).fold(0.0f32, f32::max);
                assert!(err <= 2.0 / 255.0 + 1e-6, "level {level} q{q}: {err}");
            }
        }
    }

    #[test]
    fn high_quality_is_faithful() {
        let img = smooth(128, 128, 0.3);
        let out = decode(&encode(&img, 90).unwrap()).unwrap();
        assert!(psnr(&img, &out).unwrap() >= 30.0);
    }

    #[test]
    fn psnr_non_decreasing_in_quality_on_average() {
        let corpus: Vec<ImageF32> = (0..10).map(|i| smooth(48, 40, i as f32 * 0.7)).collect();
        let mut last = f64::MIN;
        for q in [30, 50, 70, 90, 95] {
            let mean = corpus
                .iter()
                .map(|img| psnr(img, &decode(&encode(img, q).unwrap()).unwrap()).unwrap())
                .sum::<f64>()
                / corpus.len() as f64;
            assert!(mean >= last, "q{q}: {mean} < {last}");
            last = mean;
        }
    }

    #[test]
    fn requantization_is_stable() {
        let mut rng = RngStream::from_seed(3);
        let img = ImageF32::from_fn(64, 64, |x, y, _| {
            (0.5 + 0.3 * ((x + y) as f32 * 0.2).sin() + 0.05 * rng.next_f64() as f32).clamp(0.0, 1.0)
        });
        let first = decode(&encode(&img, 50).unwrap()).unwrap();
        let second = decode(&encode(&first, 50).unwrap()).unwrap();
        let p1 = psnr(&img, &first).unwrap();
        let p2 = psnr(&img, &second).unwrap();
        assert!((p1 - p2).abs() < 3.0);
    }

    #[test]
    fn blockiness_grows_at_low_quality() {
        let img = smooth(128, 128, 1.1);
        let blockiness = |out: &ImageF32| {
            let (w, h) = out.dims();
            let (mut edge, mut inner, mut ne, mut ni) = (0.0, 0.0, 0, 0);
            for y in 0..h {
                for x in 0..w - 1 {
                    let d = (out.get(x + 1, y, 0) - out.get(x, y, 0)).abs() as f64;
                    if x % 8 == 7 {
                        edge += d;
                        ne += 1;
                    } else {
                        inner += d;
                        ni += 1;
                    }
                }
            }
            edge / ne as f64 - inner / ni as f64
        };
        let lo = decode(&encode(&img, 30).unwrap()).unwrap();
        let hi = decode(&encode(&img, 95).unwrap()).unwrap();
        assert!(blockiness(&lo) > blockiness(&hi));
    }

    #[test]
    fn trailing_garbage_is_ignored() {
        let img = smooth(16, 16, 0.0);
        let mut s = encode(&img, 80).unwrap();
        let clean = decode(&s).unwrap();
        s.extend_from_slice(b"\x00\x12garbage\xFF\xD8");
        assert_eq!(decode(&s).unwrap(), clean);
    }

    #[test]
    fn bad_soi_is_corrupt() {
        let mut s = encode(&smooth(16, 16, 0.0), 80).unwrap();
        s[1] ^= 0xFF;
        assert!(matches!(decode(&s), Err(Error::CorruptStream(_))));
    }
}
