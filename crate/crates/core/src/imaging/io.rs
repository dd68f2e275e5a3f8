//! PNG and binary PPM (P6) file I/O.

use std::fs;
use std::io::{Cursor, Write};
use std::path::Path;

use super::{ImageF32, CHANNELS};
use crate::error::{Error, Result};

const PNG_SIGNATURE: &[u8] = b"\x89PNG\r\n\x1a\n";

/// 8-bit quantization: `round(s * 255)` with ties to even.
#[inline]
pub fn quantize_u8(s: f32) -> u8 {
    (s.clamp(0.0, 1.0) * 255.0).round_ties_even() as u8
}

pub fn load_image(path: impl AsRef<Path>) -> Result<ImageF32> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    decode_image_bytes(&bytes)
}

pub(crate) fn decode_image_bytes(bytes: &[u8]) -> Result<ImageF32> {
    if bytes.starts_with(PNG_SIGNATURE) {
        decode_png(bytes)
    } else if bytes.starts_with(b"P6") {
        decode_ppm(bytes)
    } else {
        Err(Error::UnsupportedFormat(
            "expected a PNG or binary PPM (P6) file".into(),
        ))
    }
}

fn decode_png(bytes: &[u8]) -> Result<ImageF32> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder
        .read_info()
        .map_err(|e| Error::CorruptStream(format!("png: {e}")))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::CorruptStream("png: image too large".into()))?;
    let mut buf = vec![0u8; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::CorruptStream(format!("png: {e}")))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let src_channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::Rgb => 3,
        other => {
            return Err(Error::UnsupportedFormat(format!(
                "png color type {other:?} (alpha channels are not supported)"
            )))
        }
    };
    let samples: Vec<f32> = match info.bit_depth {
        png::BitDepth::Eight => buf[..w * h * src_channels]
            .iter()
            .map(|&v| v as f32 / 255.0)
            .collect(),
        png::BitDepth::Sixteen => buf[..w * h * src_channels * 2]
            .chunks_exact(2)
            .map(|b| u16::from_be_bytes([b[0], b[1]]) as f32 / 65535.0)
            .collect(),
        other => {
            return Err(Error::UnsupportedFormat(format!("png bit depth {other:?}")));
        }
    };
    let data = if src_channels == 1 {
        samples.iter().flat_map(|&v| [v; CHANNELS]).collect()
    } else {
        samples
    };
    ImageF32::new(w, h, data)
}

fn decode_ppm(bytes: &[u8]) -> Result<ImageF32> {
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(Error::CorruptStream("ppm: truncated header".into())),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::CorruptStream("ppm: malformed header".into()));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::CorruptStream("ppm: malformed header".into()))?;
    }
    // exactly one whitespace byte before the raster
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::CorruptStream("ppm: malformed header".into()));
    }
    pos += 1;
    let [w, h, maxval] = fields;
    if w == 0 || h == 0 || maxval == 0 || maxval > 65535 {
        return Err(Error::CorruptStream(format!("ppm: bad header {w}x{h} maxval {maxval}")));
    }
    let bytes_per_sample = if maxval < 256 { 1 } else { 2 };
    let need = w * h * CHANNELS * bytes_per_sample;
    let raster = bytes
        .get(pos..pos + need)
        .ok_or_else(|| Error::CorruptStream("ppm: truncated raster".into()))?;
    let scale = maxval as f32;
    let data: Vec<f32> = if bytes_per_sample == 1 {
        raster.iter().map(|&v| (v as f32 / scale).min(1.0)).collect()
    } else {
        raster
            .chunks_exact(2)
            .map(|b| (u16::from_be_bytes([b[0], b[1]]) as f32 / scale).min(1.0))
            .collect()
    };
    ImageF32::new(w, h, data)
}

pub(crate) fn encode_png(img: &ImageF32) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, img.width() as u32, img.height() as u32);
        encoder.set_color(png::ColorType::Rgb);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder
            .write_header()
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
        let raster: Vec<u8> = img.data().iter().map(|&s| quantize_u8(s)).collect();
        writer
            .write_image_data(&raster)
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
        writer
            .finish()
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }
    Ok(out)
}

/// Writes an 8-bit RGB PNG.
pub fn save_image(img: &ImageF32, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_png(img)?;
    fs::write(path, bytes)?;
    Ok(())
}

/// Writes an 8-bit binary PPM (P6).
pub fn save_ppm(img: &ImageF32, path: impl AsRef<Path>) -> Result<()> {
    let mut out = Vec::with_capacity(img.data().len() + 20);
    write!(out, "P6\n{} {}\n255\n", img.width(), img.height())?;
    out.extend(img.data().iter().map(|&s| quantize_u8(s)));
    fs::write(path, out)?;
    Ok(())
}
