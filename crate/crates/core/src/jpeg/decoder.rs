use super::dct::idct8x8;
use super::entropy::{decode_block, BitReader, HuffmanDecoder, HuffmanSpec};
use super::tables::ZIGZAG;
use crate::error::{Error, Result};
use crate::imaging::{ycbcr_to_rgb_px, ImageF32};

fn corrupt(msg: impl Into<String>) -> Error {
    Error::CorruptStream(msg.into())
}

struct Component {
    id: u8,
    h: usize,
    v: usize,
    tq: usize,
    /// block grid covering whole MCUs
    bw: usize,
    bh: usize,
    coeffs: Vec<[i32; 64]>,
}

struct Frame {
    width: usize,
    height: usize,
    hmax: usize,
    vmax: usize,
    comps: Vec<Component>,
}

impl Frame {
    fn mcus(&self) -> (usize, usize) {
        (self.width.div_ceil(8 * self.hmax), self.height.div_ceil(8 * self.vmax))
    }
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn u8(&mut self) -> Result<u8> {
        let b = *self.data.get(self.pos).ok_or_else(|| corrupt("truncated stream"))?;
        self.pos += 1;
        Ok(b)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_be_bytes([self.u8()?, self.u8()?]))
    }

    fn segment(&mut self) -> Result<&'a [u8]> {
        let len = self.u16()? as usize;
        if len < 2 {
            return Err(corrupt("segment length below 2"));
        }
        let body = self
            .data
            .get(self.pos..self.pos + len - 2)
            .ok_or_else(|| corrupt("truncated segment"))?;
        self.pos += len - 2;
        Ok(body)
    }
}

/// Decodes a baseline JPEG stream. Bytes after EOI are ignored.
pub fn decode(stream: &[u8]) -> Result<ImageF32> {
    if stream.len() < 4 || stream[0] != 0xFF || stream[1] != 0xD8 {
        return Err(corrupt("missing SOI marker"));
    }
    let mut cur = Cursor { data: stream, pos: 2 };
    let mut qt: [Option<[u16; 64]>; 4] = [None; 4];
    let mut dc_tables: [Option<HuffmanDecoder>; 4] = Default::default();
    let mut ac_tables: [Option<HuffmanDecoder>; 4] = Default::default();
    let mut frame: Option<Frame> = None;
    let mut restart_interval = 0usize;
    let mut scanned = false;

    loop {
        let mut b = cur.u8()?;
        if b != 0xFF {
            return Err(corrupt(format!("expected marker at byte {}", cur.pos - 1)));
        }
        while b == 0xFF {
            b = cur.u8()?; // fill bytes
        }
        match b {
            0xD9 => break,
            0xC0 | 0xC1 => {
                let seg = cur.segment()?;
                frame = Some(parse_sof(seg)?);
            }
            0xC2..=0xC3 | 0xC5..=0xC7 | 0xC9..=0xCB | 0xCD..=0xCF => {
                return Err(Error::UnsupportedFormat(format!(
                    "JPEG process SOF{} (only baseline sequential is supported)",
                    b - 0xC0
                )));
            }
            0xC4 => {
                let mut seg = cur.segment()?;
                while !seg.is_empty() {
                    let tc_th = seg[0];
                    let (class, id) = ((tc_th >> 4) as usize, (tc_th & 0x0F) as usize);
                    if class > 1 || id > 3 || seg.len() < 17 {
                        return Err(corrupt("bad DHT segment"));
                    }
                    let bits: [u8; 16] = seg[1..17].try_into().unwrap();
                    let n: usize = bits.iter().map(|&v| v as usize).sum();
                    let values = seg.get(17..17 + n).ok_or_else(|| corrupt("truncated DHT"))?.to_vec();
                    let dec = HuffmanDecoder::new(&HuffmanSpec { bits, values })?;
                    if class == 0 {
                        dc_tables[id] = Some(dec);
                    } else {
                        ac_tables[id] = Some(dec);
                    }
                    seg = &seg[17 + n..];
                }
            }
            0xDB => {
                let mut seg = cur.segment()?;
                while !seg.is_empty() {
                    let (pq, tq) = ((seg[0] >> 4) as usize, (seg[0] & 0x0F) as usize);
                    if tq > 3 || pq > 1 {
                        return Err(corrupt("bad DQT segment"));
                    }
                    let size = 64 * (pq + 1);
                    let body = seg.get(1..1 + size).ok_or_else(|| corrupt("truncated DQT"))?;
                    let table: [u16; 64] = std::array::from_fn(|k| {
                        if pq == 0 {
                            body[k] as u16
                        } else {
                            u16::from_be_bytes([body[2 * k], body[2 * k + 1]])
                        }
                    });
                    qt[tq] = Some(table);
                    seg = &seg[1 + size..];
                }
            }
            0xDD => {
                let seg = cur.segment()?;
                if seg.len() != 2 {
                    return Err(corrupt("bad DRI segment"));
                }
                restart_interval = u16::from_be_bytes([seg[0], seg[1]]) as usize;
            }
            0xDA => {
                let seg = cur.segment()?;
                let frame = frame.as_mut().ok_or_else(|| corrupt("scan before frame header"))?;
                let consumed = decode_scan(
                    frame,
                    seg,
                    &stream[cur.pos..],
                    &dc_tables,
                    &ac_tables,
                    restart_interval,
                )?;
                cur.pos += consumed;
                scanned = true;
            }
            0xD0..=0xD7 | 0x01 => {}
            0xE0..=0xEF | 0xFE | 0xDC | 0xDE | 0xDF => {
                cur.segment()?;
            }
            other => return Err(corrupt(format!("unexpected marker 0xFF{other:02X}"))),
        }
    }

    let frame = frame.ok_or_else(|| corrupt("no frame header"))?;
    if !scanned {
        return Err(corrupt("no scan data"));
    }
    reconstruct(&frame, &qt)
}

fn parse_sof(seg: &[u8]) -> Result<Frame> {
    if seg.len() < 6 {
        return Err(corrupt("truncated SOF"));
    }
    if seg[0] != 8 {
        return Err(Error::UnsupportedFormat(format!("{}-bit JPEG samples", seg[0])));
    }
    let height = u16::from_be_bytes([seg[1], seg[2]]) as usize;
    let width = u16::from_be_bytes([seg[3], seg[4]]) as usize;
    let n = seg[5] as usize;
    if width == 0 || height == 0 {
        return Err(Error::UnsupportedFormat("JPEG without explicit dimensions".into()));
    }
    if !(n == 1 || n == 3) || seg.len() < 6 + 3 * n {
        return Err(Error::UnsupportedFormat(format!("JPEG with {n} components")));
    }
    let mut comps = Vec::with_capacity(n);
    for i in 0..n {
        let c = &seg[6 + 3 * i..9 + 3 * i];
        let (h, v) = ((c[1] >> 4) as usize, (c[1] & 0x0F) as usize);
        if !(1..=2).contains(&h) || !(1..=2).contains(&v) || c[2] > 3 {
            return Err(Error::UnsupportedFormat(format!("sampling factors {h}x{v}")));
        }
        comps.push(Component { id: c[0], h, v, tq: c[2] as usize, bw: 0, bh: 0, coeffs: Vec::new() });
    }
    let hmax = comps.iter().map(|c| c.h).max().unwrap();
    let vmax = comps.iter().map(|c| c.v).max().unwrap();
    let mut frame = Frame { width, height, hmax, vmax, comps };
    let (mx, my) = frame.mcus();
    for c in &mut frame.comps {
        c.bw = mx * c.h;
        c.bh = my * c.v;
        c.coeffs = vec![[0; 64]; c.bw * c.bh];
    }
    Ok(frame)
}

/// Decodes entropy-coded data; returns the number of bytes consumed.
fn decode_scan(
    frame: &mut Frame,
    header: &[u8],
    data: &[u8],
    dc_tables: &[Option<HuffmanDecoder>; 4],
    ac_tables: &[Option<HuffmanDecoder>; 4],
    restart_interval: usize,
) -> Result<usize> {
    let ns = *header.first().ok_or_else(|| corrupt("empty SOS"))? as usize;
    if ns == 0 || header.len() < 1 + 2 * ns + 3 {
        return Err(corrupt("truncated SOS"));
    }
    let mut members = Vec::with_capacity(ns);
    for i in 0..ns {
        let id = header[1 + 2 * i];
        let t = header[2 + 2 * i];
        let ci = frame
            .comps
            .iter()
            .position(|c| c.id == id)
            .ok_or_else(|| corrupt(format!("scan references unknown component {id}")))?;
        let dc = dc_tables[(t >> 4) as usize & 3].as_ref().ok_or_else(|| corrupt("missing DC table"))?;
        let ac = ac_tables[(t & 0x0F) as usize & 3].as_ref().ok_or_else(|| corrupt("missing AC table"))?;
        members.push((ci, dc, ac));
    }

    let mut reader = BitReader::new(data);
    let mut pred = vec![0i32; ns];
    let (mcux, mcuy) = if ns == 1 {
        let c = &frame.comps[members[0].0];
        (
            (frame.width * c.h).div_ceil(frame.hmax).div_ceil(8),
            (frame.height * c.v).div_ceil(frame.vmax).div_ceil(8),
        )
    } else {
        frame.mcus()
    };
    let total = mcux * mcuy;
    for m in 0..total {
        if restart_interval > 0 && m > 0 && m % restart_interval == 0 {
            reader.restart()?;
            pred.iter_mut().for_each(|p| *p = 0);
        }
        let (mx, my) = (m % mcux, m / mcux);
        for (k, &(ci, dc, ac)) in members.iter().enumerate() {
            let comp = &mut frame.comps[ci];
            let (bh, bv) = if ns == 1 { (1, 1) } else { (comp.h, comp.v) };
            for by in 0..bv {
                for bx in 0..bh {
                    let block = decode_block(&mut reader, &mut pred[k], dc, ac)?;
                    let (gx, gy) = (mx * bh + bx, my * bv + by);
                    comp.coeffs[gy * comp.bw + gx] = block;
                }
            }
        }
    }
    Ok(reader.position())
}

fn reconstruct(frame: &Frame, qt: &[Option<[u16; 64]>; 4]) -> Result<ImageF32> {
    let planes: Vec<(Vec<f64>, usize)> = frame
        .comps
        .iter()
        .map(|c| {
            let q = qt[c.tq].ok_or_else(|| corrupt(format!("missing quantization table {}", c.tq)))?;
            let stride = c.bw * 8;
            let mut plane = vec![0.0f64; stride * c.bh * 8];
            for (i, zz) in c.coeffs.iter().enumerate() {
                let mut natural = [0.0f64; 64];
                for k in 0..64 {
                    natural[ZIGZAG[k]] = (zz[k] * q[k] as i32) as f64;
                }
                let px = idct8x8(&natural);
                let (bx, by) = (i % c.bw, i / c.bw);
                for y in 0..8 {
                    for x in 0..8 {
                        plane[(by * 8 + y) * stride + bx * 8 + x] = (px[y * 8 + x] + 128.0).round().clamp(0.0, 255.0);
                    }
                }
            }
            Ok((plane, stride))
        })
        .collect::<Result<_>>()?;

    let (w, h) = (frame.width, frame.height);
    let sample = |ci: usize, x: usize, y: usize| -> f64 {
        let c = &frame.comps[ci];
        let (plane, stride) = &planes[ci];
        plane[(y * c.v / frame.vmax) * stride + x * c.h / frame.hmax] / 255.0
    };
    let mut data = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        for x in 0..w {
            if frame.comps.len() == 1 {
                let v = sample(0, x, y) as f32;
                data.extend([v; 3]);
            } else {
                let rgb = ycbcr_to_rgb_px([sample(0, x, y), sample(1, x, y), sample(2, x, y)]);
                data.extend(rgb.map(|v| ((v.clamp(0.0, 1.0) * 255.0).round() / 255.0) as f32));
            }
        }
    }
    ImageF32::new(w, h, data)
}
