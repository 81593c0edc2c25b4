//! Baseline sequential JPEG (ISO/IEC 10918-1) encoder with 4:2:0 chroma
//! subsampling and the standard Huffman tables, plus a decode step for the
//! round trip. Quantization tables are the Annex K tables scaled by the
//! usual quality convention.

use super::OpError;
use crate::buffer::ImageBuffer;

/// Annex K.1 luminance quantization table, natural (row-major) order.
pub const BASE_LUMA_TABLE: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, //
    12, 12, 14, 19, 26, 58, 60, 55, //
    14, 13, 16, 24, 40, 57, 69, 56, //
    14, 17, 22, 29, 51, 87, 80, 62, //
    18, 22, 37, 56, 68, 109, 103, 77, //
    24, 35, 55, 64, 81, 104, 113, 92, //
    49, 64, 78, 87, 103, 121, 120, 101, //
    72, 92, 95, 98, 112, 100, 103, 99,
];

/// Annex K.2 chrominance quantization table, natural order.
pub const BASE_CHROMA_TABLE: [u16; 64] = [
    17, 18, 24, 47, 99, 99, 99, 99, //
    18, 21, 26, 66, 99, 99, 99, 99, //
    24, 26, 56, 99, 99, 99, 99, 99, //
    47, 66, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99,
];

/// Natural-order index of each zigzag position.
pub const ZIGZAG: [usize; 64] = [
    0, 1, 8, 16, 9, 2, 3, 10, 17, 24, 32, 25, 18, 11, 4, 5, 12, 19, 26, 33, 40, 48, 41, 34, 27, 20, 13, 6, 7, 14, 21,
    28, 35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23, 30, 37, 44, 51, 58, 59, 52, 45, 38, 31, 39, 46, 53, 60, 61,
    54, 47, 55, 62, 63,
];

const DC_LUMA_BITS: [u8; 16] = [0, 1, 5, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0];
const DC_CHROMA_BITS: [u8; 16] = [0, 3, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0];
const DC_VALUES: [u8; 12] = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11];

const AC_LUMA_BITS: [u8; 16] = [0, 2, 1, 3, 3, 2, 4, 3, 5, 5, 4, 4, 0, 0, 1, 0x7d];
const AC_LUMA_VALUES: [u8; 162] = [
    0x01, 0x02, 0x03, 0x00, 0x04, 0x11, 0x05, 0x12, 0x21, 0x31, 0x41, 0x06, 0x13, 0x51, 0x61, 0x07, 0x22, 0x71, 0x14,
    0x32, 0x81, 0x91, 0xa1, 0x08, 0x23, 0x42, 0xb1, 0xc1, 0x15, 0x52, 0xd1, 0xf0, 0x24, 0x33, 0x62, 0x72, 0x82, 0x09,
    0x0a, 0x16, 0x17, 0x18, 0x19, 0x1a, 0x25, 0x26, 0x27, 0x28, 0x29, 0x2a, 0x34, 0x35, 0x36, 0x37, 0x38, 0x39, 0x3a,
    0x43, 0x44, 0x45, 0x46, 0x47, 0x48, 0x49, 0x4a, 0x53, 0x54, 0x55, 0x56, 0x57, 0x58, 0x59, 0x5a, 0x63, 0x64, 0x65,
    0x66, 0x67, 0x68, 0x69, 0x6a, 0x73, 0x74, 0x75, 0x76, 0x77, 0x78, 0x79, 0x7a, 0x83, 0x84, 0x85, 0x86, 0x87, 0x88,
    0x89, 0x8a, 0x92, 0x93, 0x94, 0x95, 0x96, 0x97, 0x98, 0x99, 0x9a, 0xa2, 0xa3, 0xa4, 0xa5, 0xa6, 0xa7, 0xa8, 0xa9,
    0xaa, 0xb2, 0xb3, 0xb4, 0xb5, 0xb6, 0xb7, 0xb8, 0xb9, 0xba, 0xc2, 0xc3, 0xc4, 0xc5, 0xc6, 0xc7, 0xc8, 0xc9, 0xca,
    0xd2, 0xd3, 0xd4, 0xd5, 0xd6, 0xd7, 0xd8, 0xd9, 0xda, 0xe1, 0xe2, 0xe3, 0xe4, 0xe5, 0xe6, 0xe7, 0xe8, 0xe9, 0xea,
    0xf1, 0xf2, 0xf3, 0xf4, 0xf5, 0xf6, 0xf7, 0xf8, 0xf9, 0xfa,
];

const AC_CHROMA_BITS: [u8; 16] = [0, 2, 1, 2, 4, 4, 3, 4, 7, 5, 4, 4, 0, 1, 2, 0x77];
const AC_CHROMA_VALUES: [u8; 162] = [
    0x00, 0x01, 0x02, 0x03, 0x11, 0x04, 0x05, 0x21, 0x31, 0x06, 0x12, 0x41, 0x51, 0x07, 0x61, 0x71, 0x13, 0x22, 0x32,
    0x81, 0x08, 0x14, 0x42, 0x91, 0xa1, 0xb1, 0xc1, 0x09, 0x23, 0x33, 0x52, 0xf0, 0x15, 0x62, 0x72, 0xd1, 0x0a, 0x16,
    0x24, 0x34, 0xe1, 0x25, 0xf1, 0x17, 0x18, 0x19, 0x1a, 0x26, 0x27, 0x28, 0x29, 0x2a, 0x35, 0x36, 0x37, 0x38, 0x39,
    0x3a, 0x43, 0x44, 0x45, 0x46, 0x47, 0x48, 0x49, 0x4a, 0x53, 0x54, 0x55, 0x56, 0x57, 0x58, 0x59, 0x5a, 0x63, 0x64,
    0x65, 0x66, 0x67, 0x68, 0x69, 0x6a, 0x73, 0x74, 0x75, 0x76, 0x77, 0x78, 0x79, 0x7a, 0x82, 0x83, 0x84, 0x85, 0x86,
    0x87, 0x88, 0x89, 0x8a, 0x92, 0x93, 0x94, 0x95, 0x96, 0x97, 0x98, 0x99, 0x9a, 0xa2, 0xa3, 0xa4, 0xa5, 0xa6, 0xa7,
    0xa8, 0xa9, 0xaa, 0xb2, 0xb3, 0xb4, 0xb5, 0xb6, 0xb7, 0xb8, 0xb9, 0xba, 0xc2, 0xc3, 0xc4, 0xc5, 0xc6, 0xc7, 0xc8,
    0xc9, 0xca, 0xd2, 0xd3, 0xd4, 0xd5, 0xd6, 0xd7, 0xd8, 0xd9, 0xda, 0xe2, 0xe3, 0xe4, 0xe5, 0xe6, 0xe7, 0xe8, 0xe9,
    0xea, 0xf2, 0xf3, 0xf4, 0xf5, 0xf6, 0xf7, 0xf8, 0xf9, 0xfa,
];

pub fn check_quality(quality: u32) -> Result<(), OpError> {
    if !(1..=100).contains(&quality) {
        return Err(OpError::InvalidParam(format!("jpeg quality must be in [1, 100], got {quality}")));
    }
    Ok(())
}

/// Percentage applied to the base tables: `5000 / q` below 50, `200 - 2q` otherwise.
pub fn quality_scale(quality: u32) -> u32 {
    if quality < 50 {
        5000 / quality
    } else {
        200 - 2 * quality
    }
}

/// Scales a base table for `quality`, clamping entries to `[1, 255]` (baseline 8-bit tables).
pub fn scaled_table(base: &[u16; 64], quality: u32) -> Result<[u16; 64], OpError> {
    check_quality(quality)?;
    let scale = quality_scale(quality);
    Ok(base.map(|b| ((u32::from(b) * scale + 50) / 100).clamp(1, 255) as u16))
}

/// Canonical Huffman code per symbol, built from a BITS/HUFFVAL pair.
struct HuffmanTable {
    codes: [(u16, u8); 256],
}

impl HuffmanTable {
    fn new(bits: &[u8; 16], values: &[u8]) -> Self {
        let mut codes = [(0u16, 0u8); 256];
        let mut code = 0u16;
        let mut k = 0;
        for (len_minus_one, &count) in bits.iter().enumerate() {
            for _ in 0..count {
                codes[values[k] as usize] = (code, len_minus_one as u8 + 1);
                code += 1;
                k += 1;
            }
            code <<= 1;
        }
        Self { codes }
    }

    #[inline]
    fn code(&self, symbol: u8) -> (u16, u8) {
        let c = self.codes[symbol as usize];
        debug_assert!(c.1 > 0, "symbol {symbol:#x} has no code");
        c
    }
}

struct BitWriter {
    out: Vec<u8>,
    acc: u32,
    n: u32,
}

impl BitWriter {
    fn new(out: Vec<u8>) -> Self {
        Self { out, acc: 0, n: 0 }
    }

    fn put(&mut self, bits: u16, len: u8) {
        if len == 0 {
            return;
        }
        self.acc = (self.acc << len) | (u32::from(bits) & ((1 << len) - 1));
        self.n += u32::from(len);
        while self.n >= 8 {
            let byte = (self.acc >> (self.n - 8)) as u8;
            self.out.push(byte);
            if byte == 0xFF {
                self.out.push(0x00);
            }
            self.n -= 8;
        }
        self.acc &= (1 << self.n) - 1;
    }

    fn finish(mut self) -> Vec<u8> {
        if self.n > 0 {
            let pad = 8 - self.n as u8;
            self.put((1 << pad) - 1, pad);
        }
        self.out
    }
}

/// Orthonormal 8-point DCT-II basis: `basis[u][x] = C(u)/2 * cos((2x+1)uπ/16)`.
fn dct_basis() -> [[f32; 8]; 8] {
    let mut m = [[0f32; 8]; 8];
    for (u, row) in m.iter_mut().enumerate() {
        let cu = if u == 0 { std::f64::consts::FRAC_1_SQRT_2 } else { 1.0 };
        for (x, v) in row.iter_mut().enumerate() {
            let angle = (2 * x + 1) as f64 * u as f64 * std::f64::consts::PI / 16.0;
            *v = (cu / 2.0 * angle.cos()) as f32;
        }
    }
    m
}

fn fdct(block: &[f32; 64], basis: &[[f32; 8]; 8]) -> [f32; 64] {
    let mut tmp = [0f32; 64];
    for y in 0..8 {
        for u in 0..8 {
            tmp[y * 8 + u] = (0..8).map(|x| basis[u][x] * block[y * 8 + x]).sum();
        }
    }
    let mut out = [0f32; 64];
    for v in 0..8 {
        for u in 0..8 {
            out[v * 8 + u] = (0..8).map(|y| basis[v][y] * tmp[y * 8 + u]).sum();
        }
    }
    out
}

fn category(value: i32) -> u8 {
    (32 - value.unsigned_abs().leading_zeros()) as u8
}

/// Magnitude bits for a value of the given category (one's-complement for negatives).
fn magnitude_bits(value: i32, cat: u8) -> u16 {
    if value >= 0 {
        value as u16
    } else {
        (value + (1 << cat) - 1) as u16
    }
}

struct Component<'a> {
    plane: Vec<f32>,
    width: usize,
    quant: [u16; 64],
    dc: &'a HuffmanTable,
    ac: &'a HuffmanTable,
    pred: i32,
}

impl Component<'_> {
    fn encode_block(&mut self, bx: usize, by: usize, basis: &[[f32; 8]; 8], w: &mut BitWriter) {
        let mut block = [0f32; 64];
        for y in 0..8 {
            for x in 0..8 {
                block[y * 8 + x] = self.plane[(by * 8 + y) * self.width + bx * 8 + x] - 128.0;
            }
        }
        let coeffs = fdct(&block, basis);
        let mut zz = [0i32; 64];
        for (k, &natural) in ZIGZAG.iter().enumerate() {
            zz[k] = (coeffs[natural] / f32::from(self.quant[natural])).round() as i32;
        }

        let diff = zz[0] - self.pred;
        self.pred = zz[0];
        let cat = category(diff);
        let (code, len) = self.dc.code(cat);
        w.put(code, len);
        w.put(magnitude_bits(diff, cat), cat);

        let mut run = 0u8;
        for &coef in &zz[1..] {
            if coef == 0 {
                run += 1;
                continue;
            }
            while run > 15 {
                let (code, len) = self.ac.code(0xF0);
                w.put(code, len);
                run -= 16;
            }
            let cat = category(coef);
            let (code, len) = self.ac.code((run << 4) | cat);
            w.put(code, len);
            w.put(magnitude_bits(coef, cat), cat);
            run = 0;
        }
        if run > 0 {
            let (code, len) = self.ac.code(0x00);
            w.put(code, len);
        }
    }
}

fn marker(out: &mut Vec<u8>, code: u8, payload: &[u8]) {
    out.extend_from_slice(&[0xFF, code]);
    out.extend_from_slice(&((payload.len() + 2) as u16).to_be_bytes());
    out.extend_from_slice(payload);
}

/// Encodes 8-bit RGB samples as a baseline JFIF stream.
pub fn encode_rgb8(width: usize, height: usize, rgb: &[u8], quality: u32) -> Result<Vec<u8>, OpError> {
    check_quality(quality)?;
    if width == 0 || height == 0 || width > 65535 || height > 65535 || rgb.len() != width * height * 3 {
        return Err(OpError::InvalidParam(format!("cannot encode {width}x{height} image")));
    }
    let luma_q = scaled_table(&BASE_LUMA_TABLE, quality)?;
    let chroma_q = scaled_table(&BASE_CHROMA_TABLE, quality)?;

    // colour conversion on an MCU-aligned canvas with replicated edges
    let pw = width.div_ceil(16) * 16;
    let ph = height.div_ceil(16) * 16;
    let mut planes = [vec![0f32; pw * ph], vec![0f32; pw * ph], vec![0f32; pw * ph]];
    for y in 0..ph {
        let sy = y.min(height - 1);
        for x in 0..pw {
            let sx = x.min(width - 1);
            let i = (sy * width + sx) * 3;
            let (r, g, b) = (f32::from(rgb[i]), f32::from(rgb[i + 1]), f32::from(rgb[i + 2]));
            planes[0][y * pw + x] = 0.299 * r + 0.587 * g + 0.114 * b;
            planes[1][y * pw + x] = -0.168_736 * r - 0.331_264 * g + 0.5 * b + 128.0;
            planes[2][y * pw + x] = 0.5 * r - 0.418_688 * g - 0.081_312 * b + 128.0;
        }
    }
    let [luma, cb_full, cr_full] = planes;
    let (cw, ch) = (pw / 2, ph / 2);
    let subsample = |full: &[f32]| -> Vec<f32> {
        let mut out = vec![0f32; cw * ch];
        for y in 0..ch {
            for x in 0..cw {
                let i = 2 * y * pw + 2 * x;
                out[y * cw + x] = (full[i] + full[i + 1] + full[i + pw] + full[i + pw + 1]) * 0.25;
            }
        }
        out
    };

    let dc_luma = HuffmanTable::new(&DC_LUMA_BITS, &DC_VALUES);
    let dc_chroma = HuffmanTable::new(&DC_CHROMA_BITS, &DC_VALUES);
    let ac_luma = HuffmanTable::new(&AC_LUMA_BITS, &AC_LUMA_VALUES);
    let ac_chroma = HuffmanTable::new(&AC_CHROMA_BITS, &AC_CHROMA_VALUES);

    let mut components = [
        Component { plane: luma, width: pw, quant: luma_q, dc: &dc_luma, ac: &ac_luma, pred: 0 },
        Component { plane: subsample(&cb_full), width: cw, quant: chroma_q, dc: &dc_chroma, ac: &ac_chroma, pred: 0 },
        Component { plane: subsample(&cr_full), width: cw, quant: chroma_q, dc: &dc_chroma, ac: &ac_chroma, pred: 0 },
    ];

    let mut out = Vec::with_capacity(width * height / 2 + 1024);
    out.extend_from_slice(&[0xFF, 0xD8]);
    marker(&mut out, 0xE0, &[b'J', b'F', b'I', b'F', 0, 1, 1, 0, 0, 1, 0, 1, 0, 0]);
    let mut dqt = Vec::with_capacity(130);
    for (id, table) in [(0u8, &luma_q), (1u8, &chroma_q)] {
        dqt.push(id);
        dqt.extend(ZIGZAG.iter().map(|&n| table[n] as u8));
    }
    marker(&mut out, 0xDB, &dqt);
    let (w16, h16) = ((width as u16).to_be_bytes(), (height as u16).to_be_bytes());
    marker(
        &mut out,
        0xC0,
        &[8, h16[0], h16[1], w16[0], w16[1], 3, 1, 0x22, 0, 2, 0x11, 1, 3, 0x11, 1],
    );
    let mut dht = Vec::new();
    for (class_id, bits, values) in [
        (0x00u8, &DC_LUMA_BITS, &DC_VALUES[..]),
        (0x10, &AC_LUMA_BITS, &AC_LUMA_VALUES[..]),
        (0x01, &DC_CHROMA_BITS, &DC_VALUES[..]),
        (0x11, &AC_CHROMA_BITS, &AC_CHROMA_VALUES[..]),
    ] {
        dht.push(class_id);
        dht.extend_from_slice(bits);
        dht.extend_from_slice(values);
    }
    marker(&mut out, 0xC4, &dht);
    marker(&mut out, 0xDA, &[3, 1, 0x00, 2, 0x11, 3, 0x11, 0, 63, 0]);

    let basis = dct_basis();
    let mut writer = BitWriter::new(out);
    for my in 0..ph / 16 {
        for mx in 0..pw / 16 {
            for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                components[0].encode_block(mx * 2 + dx, my * 2 + dy, &basis, &mut writer);
            }
            components[1].encode_block(mx, my, &basis, &mut writer);
            components[2].encode_block(mx, my, &basis, &mut writer);
        }
    }
    let mut out = writer.finish();
    out.extend_from_slice(&[0xFF, 0xD9]);
    Ok(out)
}

pub fn encode(img: &ImageBuffer, quality: u32) -> Result<Vec<u8>, OpError> {
    encode_rgb8(img.width(), img.height(), &img.to_rgb8(), quality)
}

pub fn decode(bytes: &[u8]) -> Result<ImageBuffer, OpError> {
    let decoded = image::load_from_memory_with_format(bytes, image::ImageFormat::Jpeg)
        .map_err(|e| OpError::Codec(e.to_string()))?
        .to_rgb8();
    let (w, h) = decoded.dimensions();
    ImageBuffer::from_rgb8(w as usize, h as usize, decoded.as_raw()).map_err(|e| OpError::Codec(e.to_string()))
}

/// Encode at `quality`, then decode back to float samples.
pub fn jpeg_transcode(img: &ImageBuffer, quality: u32) -> Result<ImageBuffer, OpError> {
    decode(&encode(img, quality)?)
}
