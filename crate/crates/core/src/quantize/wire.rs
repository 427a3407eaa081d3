//! Byte layout of a PPS message.
//!
//! ```text
//! [u8 flags][varint count][mass fields, little-endian][indices, ⌈log₂n⌉ bits each, LSB-first]
//! ```
//!
//! `flags`: bit 0 positive part present, bit 1 negative part present, bit 2
//! simplified encoding, bit 3 masses stored as f32, bit 4 unit mass omitted.
//! `count` is the per-part sample count `M`; both parts, when present, carry
//! `M` indices. The dimension is shared context and is not transmitted.
//!
//! The header (flags and count) is framing; the payload (masses and indices)
//! is exactly [`message_bits`](super::message_bits) long before padding to a
//! whole byte.

use super::{check_float_bits, index_width, message_bits, Encoding, QuantizedGradient};
use crate::error::{Error, Result};

const POS: u8 = 1;
const NEG: u8 = 1 << 1;
const SIMPLIFIED: u8 = 1 << 2;
const F32: u8 = 1 << 3;
const UNIT: u8 = 1 << 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WireSize {
    pub header_bytes: usize,
    pub payload_bits: u64,
    pub total_bytes: usize,
}

fn varint_len(mut v: u64) -> usize {
    let mut n = 1;
    while v >= 0x80 {
        v >>= 7;
        n += 1;
    }
    n
}

fn per_part_count(q: &QuantizedGradient) -> Result<usize> {
    match (q.pos_indices.len(), q.neg_indices.len()) {
        (0, n) | (n, 0) => Ok(n),
        (a, b) if a == b => Ok(a),
        (a, b) => Err(Error::Wire(format!("parts carry different sample counts ({a} vs {b})"))),
    }
}

pub fn wire_size(q: &QuantizedGradient, float_bits: u32) -> Result<WireSize> {
    check_float_bits(float_bits)?;
    let count = per_part_count(q)?;
    let header_bytes = 1 + varint_len(count as u64);
    let payload_bits = message_bits(q, float_bits);
    Ok(WireSize { header_bytes, payload_bits, total_bytes: header_bytes + payload_bits.div_ceil(8) as usize })
}

struct BitWriter {
    bytes: Vec<u8>,
    used: u32,
}

impl BitWriter {
    fn push(&mut self, value: u64, width: u32) {
        for b in 0..width {
            if self.used == 0 {
                self.bytes.push(0);
            }
            if (value >> b) & 1 == 1 {
                *self.bytes.last_mut().unwrap() |= 1 << self.used;
            }
            self.used = (self.used + 1) % 8;
        }
    }
}

pub fn encode_to_bytes(q: &QuantizedGradient, float_bits: u32) -> Result<Vec<u8>> {
    q.check()?;
    let size = wire_size(q, float_bits)?;
    let count = per_part_count(q)?;
    let mut flags = 0u8;
    if !q.pos_indices.is_empty() {
        flags |= POS;
    }
    if !q.neg_indices.is_empty() {
        flags |= NEG;
    }
    if q.encoding == Encoding::Simplified {
        flags |= SIMPLIFIED;
    }
    if float_bits == 32 {
        flags |= F32;
    }
    if q.float_fields() == 0 {
        flags |= UNIT;
    }

    let mut out = Vec::with_capacity(size.total_bytes);
    out.push(flags);
    let mut c = count as u64;
    loop {
        let byte = (c & 0x7f) as u8;
        c >>= 7;
        if c == 0 {
            out.push(byte);
            break;
        }
        out.push(byte | 0x80);
    }

    let masses: &[f64] = match q.float_fields() {
        2 => &[q.pos_mass, q.neg_mass],
        1 => std::slice::from_ref(&q.pos_mass),
        _ => &[],
    };
    for &m in masses {
        if float_bits == 32 {
            if m > 0.0 && m as f32 == 0.0 {
                return Err(Error::Wire(format!("mass {m:e} underflows f32")));
            }
            out.extend_from_slice(&(m as f32).to_le_bytes());
        } else {
            out.extend_from_slice(&m.to_le_bytes());
        }
    }

    let width = index_width(q.dim);
    let mut bits = BitWriter { bytes: out, used: 0 };
    for &k in q.pos_indices.iter().chain(&q.neg_indices) {
        bits.push(k as u64, width);
    }
    debug_assert_eq!(bits.bytes.len(), size.total_bytes);
    Ok(bits.bytes)
}

pub fn decode_from_bytes(bytes: &[u8], dim: usize) -> Result<QuantizedGradient> {
    let short = || Error::Wire("truncated message".into());
    let (&flags, mut rest) = bytes.split_first().ok_or_else(short)?;
    if flags & !(POS | NEG | SIMPLIFIED | F32 | UNIT) != 0 {
        return Err(Error::Wire(format!("unknown flag bits {flags:#04x}")));
    }
    let mut count = 0u64;
    let mut shift = 0;
    loop {
        let (&b, r) = rest.split_first().ok_or_else(short)?;
        rest = r;
        if shift >= 64 {
            return Err(Error::Wire("varint overflow".into()));
        }
        count |= ((b & 0x7f) as u64) << shift;
        shift += 7;
        if b & 0x80 == 0 {
            break;
        }
    }
    let count = count as usize;
    let simplified = flags & SIMPLIFIED != 0;
    let has_pos = flags & POS != 0;
    let has_neg = flags & NEG != 0;
    if simplified && has_neg {
        return Err(Error::Wire("simplified message with a negative part".into()));
    }
    if (has_pos || has_neg) != (count > 0) {
        return Err(Error::Wire("sample count inconsistent with part flags".into()));
    }

    let fields = if simplified {
        if flags & UNIT != 0 {
            0
        } else {
            1
        }
    } else {
        2
    };
    let fbytes = if flags & F32 != 0 { 4 } else { 8 };
    let mut masses = [0.0f64; 2];
    for slot in masses.iter_mut().take(fields) {
        if rest.len() < fbytes {
            return Err(short());
        }
        let (head, r) = rest.split_at(fbytes);
        *slot = if fbytes == 4 { f32::from_le_bytes(head.try_into().unwrap()) as f64 } else { f64::from_le_bytes(head.try_into().unwrap()) };
        rest = r;
    }
    let (pos_mass, neg_mass) = match (simplified, fields) {
        (true, 0) => (if has_pos { 1.0 } else { 0.0 }, 0.0),
        (true, _) => (masses[0], 0.0),
        (false, _) => (masses[0], masses[1]),
    };

    let width = index_width(dim);
    let parts = has_pos as usize + has_neg as usize;
    let total = count * parts;
    let need = (total as u64 * width as u64).div_ceil(8) as usize;
    if rest.len() != need {
        return Err(Error::Wire(format!("expected {need} index bytes, found {}", rest.len())));
    }
    let mut indices = Vec::with_capacity(total);
    let mut bit = 0usize;
    for _ in 0..total {
        let mut v = 0u64;
        for b in 0..width as usize {
            let pos = bit + b;
            if (rest[pos / 8] >> (pos % 8)) & 1 == 1 {
                v |= 1 << b;
            }
        }
        bit += width as usize;
        indices.push(v as u32);
    }
    let neg_indices = if has_neg { indices.split_off(if has_pos { count } else { 0 }) } else { Vec::new() };
    let q = QuantizedGradient {
        dim,
        pos_mass,
        neg_mass,
        pos_indices: indices,
        neg_indices,
        encoding: if simplified { Encoding::Simplified } else { Encoding::General },
    };
    q.check()?;
    Ok(q)
}
