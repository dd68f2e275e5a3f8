//! Baseline Huffman coding of quantized 8×8 blocks.

use super::tables::*;
use crate::error::{Error, Result};

/// Huffman table as carried in a DHT segment: code counts per length 1..=16
/// and the symbols in code order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HuffmanSpec {
    pub bits: [u8; 16],
    pub values: Vec<u8>,
}

impl HuffmanSpec {
    pub fn dc_luma() -> Self {
        HuffmanSpec { bits: DC_LUMA_BITS, values: DC_LUMA_VALS.to_vec() }
    }
    pub fn ac_luma() -> Self {
        HuffmanSpec { bits: AC_LUMA_BITS, values: AC_LUMA_VALS.to_vec() }
    }
    pub fn dc_chroma() -> Self {
        HuffmanSpec { bits: DC_CHROMA_BITS, values: DC_CHROMA_VALS.to_vec() }
    }
    pub fn ac_chroma() -> Self {
        HuffmanSpec { bits: AC_CHROMA_BITS, values: AC_CHROMA_VALS.to_vec() }
    }

    /// Canonical codes as `(code, length)` in symbol-list order.
    fn codes(&self) -> Vec<(u16, u8)> {
        let mut out = Vec::with_capacity(self.values.len());
        let mut code = 0u32;
        for (len_minus_1, &count) in self.bits.iter().enumerate() {
            for _ in 0..count {
                out.push((code as u16, len_minus_1 as u8 + 1));
                code += 1;
            }
            code <<= 1;
        }
        out
    }
}

pub struct HuffmanEncoder {
    table: [(u16, u8); 256],
}

impl HuffmanEncoder {
    pub fn new(spec: &HuffmanSpec) -> Self {
        let mut table = [(0u16, 0u8); 256];
        for (&sym, code) in spec.values.iter().zip(spec.codes()) {
            table[sym as usize] = code;
        }
        HuffmanEncoder { table }
    }

    fn emit(&self, w: &mut BitWriter, symbol: u8) {
        let (code, len) = self.table[symbol as usize];
        debug_assert!(len > 0, "symbol {symbol:#x} has no code");
        w.write(code as u32, len);
    }
}

pub struct HuffmanDecoder {
    /// Largest code of each length (or -1 when none).
    max_code: [i32; 17],
    /// Index into `values` of the first code of each length, minus that code.
    offset: [i32; 17],
    values: Vec<u8>,
}

impl HuffmanDecoder {
    pub fn new(spec: &HuffmanSpec) -> Result<Self> {
        let total: usize = spec.bits.iter().map(|&b| b as usize).sum();
        if total != spec.values.len() || total > 256 {
            return Err(Error::CorruptStream("huffman table size mismatch".into()));
        }
        let mut max_code = [-1i32; 17];
        let mut offset = [0i32; 17];
        let mut code = 0i32;
        let mut k = 0i32;
        for len in 1..=16 {
            let count = spec.bits[len - 1] as i32;
            if count > 0 {
                offset[len] = k - code;
                code += count;
                k += count;
                max_code[len] = code - 1;
                if code > 1 << len {
                    return Err(Error::CorruptStream("over-subscribed huffman table".into()));
                }
            }
            code <<= 1;
        }
        Ok(HuffmanDecoder { max_code, offset, values: spec.values.clone() })
    }

    fn decode(&self, r: &mut BitReader) -> Result<u8> {
        let mut code = 0i32;
        for len in 1..=16 {
            code = (code << 1) | r.bit()? as i32;
            if code <= self.max_code[len] {
                return Ok(self.values[(code + self.offset[len]) as usize]);
            }
        }
        Err(Error::CorruptStream("invalid huffman code".into()))
    }
}

/// MSB-first bit packer with 0xFF byte stuffing.
#[derive(Default)]
pub struct BitWriter {
    out: Vec<u8>,
    acc: u32,
    n: u8,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn write(&mut self, bits: u32, len: u8) {
        debug_assert!(len <= 16);
        self.acc = (self.acc << len) | (bits & ((1u32 << len) - 1));
        self.n += len;
        while self.n >= 8 {
            let byte = (self.acc >> (self.n - 8)) as u8;
            self.out.push(byte);
            if byte == 0xFF {
                self.out.push(0x00);
            }
            self.n -= 8;
        }
        self.acc &= (1u32 << self.n) - 1;
    }

    /// Pads the final partial byte with 1-bits and returns the scan bytes.
    pub fn finish(mut self) -> Vec<u8> {
        if self.n > 0 {
            let pad = 8 - self.n;
            self.write((1 << pad) - 1, pad);
        }
        self.out
    }
}

/// Reads entropy-coded bits, undoing byte stuffing. Stops at any marker.
pub struct BitReader<'a> {
    data: &'a [u8],
    pos: usize,
    acc: u32,
    n: u8,
    marker: Option<u8>,
}

impl<'a> BitReader<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        BitReader { data, pos: 0, acc: 0, n: 0, marker: None }
    }

    /// Byte offset just past the consumed entropy-coded data (before any
    /// marker that stopped the reader).
    pub fn position(&self) -> usize {
        self.pos
    }

    fn fill_byte(&mut self) -> Result<()> {
        if self.marker.is_some() || self.pos >= self.data.len() {
            return Err(Error::CorruptStream("entropy-coded data ended early".into()));
        }
        let b = self.data[self.pos];
        if b == 0xFF {
            match self.data.get(self.pos + 1) {
                Some(0x00) => self.pos += 2,
                Some(&m) => {
                    self.marker = Some(m);
                    return Err(Error::CorruptStream(format!("unexpected marker 0xFF{m:02X} in scan")));
                }
                None => return Err(Error::CorruptStream("entropy-coded data ended early".into())),
            }
        } else {
            self.pos += 1;
        }
        self.acc = (self.acc << 8) | b as u32;
        self.n += 8;
        Ok(())
    }

    fn bit(&mut self) -> Result<u32> {
        if self.n == 0 {
            self.fill_byte()?;
        }
        self.n -= 1;
        Ok((self.acc >> self.n) & 1)
    }

    fn bits(&mut self, len: u8) -> Result<u32> {
        let mut v = 0;
        for _ in 0..len {
            v = (v << 1) | self.bit()?;
        }
        Ok(v)
    }

    /// Drops the remaining bits of the current byte and consumes an RSTn marker.
    pub fn restart(&mut self) -> Result<()> {
        self.n = 0;
        self.acc = 0;
        self.marker = None;
        match (self.data.get(self.pos), self.data.get(self.pos + 1)) {
            (Some(0xFF), Some(m)) if (0xD0..=0xD7).contains(m) => {
                self.pos += 2;
                Ok(())
            }
            _ => Err(Error::CorruptStream("missing restart marker".into())),
        }
    }
}

fn magnitude_category(v: i32) -> u8 {
    (32 - v.unsigned_abs().leading_zeros()) as u8
}

fn magnitude_bits(v: i32, size: u8) -> u32 {
    if v >= 0 {
        v as u32
    } else {
        (v - 1) as u32 & ((1u32 << size) - 1)
    }
}

fn extend(bits: u32, size: u8) -> i32 {
    if size == 0 {
        return 0;
    }
    let v = bits as i32;
    if v < 1 << (size - 1) {
        v - (1 << size) + 1
    } else {
        v
    }
}

/// Encodes one block given in zig-zag order; `prev_dc` is the DC predictor.
pub fn encode_block(
    w: &mut BitWriter,
    zz: &[i32; 64],
    prev_dc: &mut i32,
    dc: &HuffmanEncoder,
    ac: &HuffmanEncoder,
) {
    let diff = zz[0] - *prev_dc;
    *prev_dc = zz[0];
    let size = magnitude_category(diff);
    dc.emit(w, size);
    w.write(magnitude_bits(diff, size), size);

    let mut run = 0u8;
    for &v in &zz[1..] {
        if v == 0 {
            run += 1;
            continue;
        }
        while run >= 16 {
            ac.emit(w, 0xF0);
            run -= 16;
        }
        let size = magnitude_category(v);
        ac.emit(w, run << 4 | size);
        w.write(magnitude_bits(v, size), size);
        run = 0;
    }
    if run > 0 {
        ac.emit(w, 0x00);
    }
}

/// Decodes one block into zig-zag order.
pub fn decode_block(
    r: &mut BitReader,
    prev_dc: &mut i32,
    dc: &HuffmanDecoder,
    ac: &HuffmanDecoder,
) -> Result<[i32; 64]> {
    let mut zz = [0i32; 64];
    let size = dc.decode(r)?;
    if size > 11 {
        return Err(Error::CorruptStream(format!("DC magnitude category {size}")));
    }
    *prev_dc += extend(r.bits(size)?, size);
    zz[0] = *prev_dc;

    let mut k = 1;
    while k < 64 {
        let sym = ac.decode(r)?;
        let (run, size) = (sym >> 4, sym & 0x0F);
        if size == 0 {
            if run == 15 {
                k += 16;
                continue;
            }
            break; // end of block
        }
        k += run as usize;
        if k > 63 {
            return Err(Error::CorruptStream("AC run past end of block".into()));
        }
        zz[k] = extend(r.bits(size)?, size);
        k += 1;
    }
    if k > 64 {
        return Err(Error::CorruptStream("AC run past end of block".into()));
    }
    Ok(zz)
}

/// Codes a sequence of blocks with the standard luminance tables.
///
/// Coefficients must fit baseline ranges: |DC| ≤ 1023, |AC| ≤ 1023.
pub fn encode_blocks(blocks: &[[i32; 64]]) -> Vec<u8> {
    let dc = HuffmanEncoder::new(&HuffmanSpec::dc_luma());
    let ac = HuffmanEncoder::new(&HuffmanSpec::ac_luma());
    let mut w = BitWriter::new();
    let mut pred = 0;
    for b in blocks {
        encode_block(&mut w, b, &mut pred, &dc, &ac);
    }
    w.finish()
}

/// Inverse of [`encode_blocks`].
pub fn decode_blocks(data: &[u8], count: usize) -> Result<Vec<[i32; 64]>> {
    let dc = HuffmanDecoder::new(&HuffmanSpec::dc_luma())?;
    let ac = HuffmanDecoder::new(&HuffmanSpec::ac_luma())?;
    let mut r = BitReader::new(data);
    let mut pred = 0;
    (0..count).map(|_| decode_block(&mut r, &mut pred, &dc, &ac)).collect()
}
