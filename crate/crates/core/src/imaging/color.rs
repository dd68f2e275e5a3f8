//! BT.601 full-range RGB <-> YCbCr. Chroma planes carry a +0.5 offset so all
//! three planes stay inside `[0, 1]`.

use super::ImageF32;

const KR: f64 = 0.299;
const KB: f64 = 0.114;
const KG: f64 = 1.0 - KR - KB;

#[inline]
pub fn rgb_to_ycbcr_px([r, g, b]: [f64; 3]) -> [f64; 3] {
    let y = KR * r + KG * g + KB * b;
    let cb = (b - y) / (2.0 * (1.0 - KB)) + 0.5;
    let cr = (r - y) / (2.0 * (1.0 - KR)) + 0.5;
    [y, cb, cr]
}

#[inline]
pub fn ycbcr_to_rgb_px([y, cb, cr]: [f64; 3]) -> [f64; 3] {
    let cb = cb - 0.5;
    let cr = cr - 0.5;
    let r = y + 2.0 * (1.0 - KR) * cr;
    let b = y + 2.0 * (1.0 - KB) * cb;
    let g = (y - KR * r - KB * b) / KG;
    [r, g, b]
}

fn map_pixels(img: &ImageF32, f: impl Fn([f64; 3]) -> [f64; 3]) -> ImageF32 {
    let (w, h) = img.dims();
    let data: Vec<f64> = img
        .data()
        .chunks_exact(3)
        .flat_map(|p| f([p[0] as f64, p[1] as f64, p[2] as f64]))
        .collect();
    ImageF32::from_f64_clamped(w, h, &data)
}

pub fn rgb_to_ycbcr(img: &ImageF32) -> ImageF32 {
    map_pixels(img, rgb_to_ycbcr_px)
}

pub fn ycbcr_to_rgb(img: &ImageF32) -> ImageF32 {
    map_pixels(img, ycbcr_to_rgb_px)
}
