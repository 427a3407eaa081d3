//! Probability-proportional-to-size (PPS) quantization.
//!
//! A vector `g` is split into its positive and negative parts. Each part is
//! normalised into a categorical distribution over coordinates, `M` indices are
//! drawn from it, and the message carries the two ℓ₁ masses plus the index
//! samples. Decoding spreads each mass evenly over its sampled indices, which
//! gives an unbiased estimate of `g`:
//!
//! ```text
//! Q(g) = ‖[g]₊‖₁/M · Σ e_{k_i}  −  ‖[−g]₊‖₁/M · Σ e_{l_i}
//! ```
//!
//! When `g` lies on the simplex the negative part is absent and the mass is 1,
//! so only the indices need to be sent ([`pps_simplified_encode`]).

mod baselines;
mod codec;
mod wire;

pub use baselines::{
    estimate_second_moment, random_m_encode, top_m_encode, Compressor, CompressorStats, IdentityCompressor,
    OneHotCompressor, PpsCompressor, RandomMCompressor, TopMCompressor,
};
pub use codec::{Codec, Encoded};
pub use wire::{decode_from_bytes, encode_to_bytes, wire_size, WireSize};

use rand::Rng;

use crate::error::{Error, Result};

/// Relative magnitude below which a component is treated as zero when forming
/// sampling probabilities.
pub const ZERO_CUTOFF: f64 = 1e-15;

/// Absolute tolerance for recognising a unit ℓ₁ mass in the simplified encoding.
pub const UNIT_MASS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Encoding {
    /// Two masses and two index samples.
    General,
    /// Non-negative part only; the mass is omitted on the wire when it is 1.
    Simplified,
}

/// Wire-level PPS message.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedGradient {
    pub dim: usize,
    pub pos_mass: f64,
    pub neg_mass: f64,
    pub pos_indices: Vec<u32>,
    pub neg_indices: Vec<u32>,
    pub encoding: Encoding,
}

impl QuantizedGradient {
    pub fn empty(dim: usize, encoding: Encoding) -> Self {
        Self { dim, pos_mass: 0.0, neg_mass: 0.0, pos_indices: Vec::new(), neg_indices: Vec::new(), encoding }
    }

    /// Number of transmitted mass fields.
    pub fn float_fields(&self) -> u64 {
        match self.encoding {
            Encoding::General => 2,
            Encoding::Simplified if self.pos_mass == 1.0 => 0,
            Encoding::Simplified => 1,
        }
    }

    pub fn index_count(&self) -> usize {
        self.pos_indices.len() + self.neg_indices.len()
    }

    /// Checks the structural invariants of a message.
    pub fn check(&self) -> Result<()> {
        if !(self.pos_mass >= 0.0 && self.neg_mass >= 0.0) {
            return Err(Error::Wire("negative or NaN mass".into()));
        }
        if (self.pos_mass == 0.0) != self.pos_indices.is_empty() || (self.neg_mass == 0.0) != self.neg_indices.is_empty() {
            return Err(Error::Wire("mass/index presence mismatch".into()));
        }
        if self.encoding == Encoding::Simplified && (self.neg_mass != 0.0 || !self.neg_indices.is_empty()) {
            return Err(Error::Wire("simplified message with a negative part".into()));
        }
        if let Some(&k) = self.pos_indices.iter().chain(&self.neg_indices).find(|&&k| k as usize >= self.dim) {
            return Err(Error::Wire(format!("index {k} out of range for dimension {}", self.dim)));
        }
        Ok(())
    }
}

/// `g = pos − neg` with both parts non-negative.
pub fn split_signs(g: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let pos = g.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
    let neg = g.iter().map(|&v| if v < 0.0 { -v } else { 0.0 }).collect();
    (pos, neg)
}

/// Inverse-CDF sampler over a fixed non-negative weight vector.
#[derive(Debug, Clone)]
pub struct CategoricalSampler {
    prefix: Vec<f64>,
}

impl CategoricalSampler {
    pub fn new(weights: &[f64]) -> Result<Self> {
        let mut acc = 0.0;
        let mut prefix = Vec::with_capacity(weights.len());
        for &w in weights {
            if w < 0.0 || w.is_nan() {
                return Err(Error::NegativeComponent { index: prefix.len(), value: w });
            }
            acc += w;
            prefix.push(acc);
        }
        if !(acc > 0.0) || !acc.is_finite() {
            return Err(Error::ZeroMass);
        }
        Ok(Self { prefix })
    }

    pub fn total(&self) -> f64 {
        *self.prefix.last().expect("non-empty by construction")
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u = rng.random::<f64>() * self.total();
        // first index whose cumulative weight exceeds u; zero-weight entries are never selected
        let k = self.prefix.partition_point(|&p| p <= u);
        k.min(self.prefix.len() - 1)
    }
}

/// `count` i.i.d. draws with `P(k) = w_k / Σw`.
pub fn categorical_sample<R: Rng + ?Sized>(weights: &[f64], count: usize, rng: &mut R) -> Result<Vec<usize>> {
    if count == 0 {
        return Err(Error::ZeroSamples);
    }
    let sampler = CategoricalSampler::new(weights)?;
    Ok((0..count).map(|_| sampler.sample(rng)).collect())
}

fn cutoff(part: &mut [f64], scale: f64) {
    let eps = ZERO_CUTOFF * scale;
    for v in part.iter_mut() {
        if *v < eps {
            *v = 0.0;
        }
    }
}

fn sample_part<R: Rng + ?Sized>(part: &[f64], m: usize, rng: &mut R) -> Result<(f64, Vec<u32>)> {
    let sampler = match CategoricalSampler::new(part) {
        Ok(s) => s,
        Err(Error::ZeroMass) => return Ok((0.0, Vec::new())),
        Err(e) => return Err(e),
    };
    let idx = (0..m).map(|_| sampler.sample(rng) as u32).collect();
    Ok((sampler.total(), idx))
}

/// General PPS encoding with `m` samples per sign part.
pub fn pps_encode<R: Rng + ?Sized>(g: &[f64], m: usize, rng: &mut R) -> Result<QuantizedGradient> {
    if m == 0 {
        return Err(Error::ZeroSamples);
    }
    let (mut pos, mut neg) = split_signs(g);
    let l1: f64 = g.iter().map(|v| v.abs()).sum();
    if !l1.is_finite() {
        return Err(Error::Numeric("non-finite gradient passed to PPS encoder".into()));
    }
    cutoff(&mut pos, l1);
    cutoff(&mut neg, l1);
    let (pos_mass, pos_indices) = sample_part(&pos, m, rng)?;
    let (neg_mass, neg_indices) = sample_part(&neg, m, rng)?;
    Ok(QuantizedGradient { dim: g.len(), pos_mass, neg_mass, pos_indices, neg_indices, encoding: Encoding::General })
}

/// PPS encoding of a non-negative vector; the negative part is structurally absent.
pub fn pps_simplified_encode<R: Rng + ?Sized>(g: &[f64], m: usize, rng: &mut R) -> Result<QuantizedGradient> {
    if m == 0 {
        return Err(Error::ZeroSamples);
    }
    if let Some((index, &value)) = g.iter().enumerate().find(|(_, v)| **v < 0.0 || v.is_nan()) {
        return Err(Error::NegativeComponent { index, value });
    }
    let mut part = g.to_vec();
    let l1: f64 = part.iter().sum();
    cutoff(&mut part, l1);
    let (mut mass, indices) = sample_part(&part, m, rng)?;
    if (mass - 1.0).abs() <= UNIT_MASS_TOL {
        mass = 1.0;
    }
    Ok(QuantizedGradient {
        dim: g.len(),
        pos_mass: mass,
        neg_mass: 0.0,
        pos_indices: indices,
        neg_indices: Vec::new(),
        encoding: Encoding::Simplified,
    })
}

/// Dense reconstruction of a message.
pub fn pps_decode(q: &QuantizedGradient) -> Vec<f64> {
    // per-index multiplicities first, so a repeated index gets exactly count·mass/M
    let mut out = vec![0.0; q.dim];
    let mut neg = vec![0.0; if q.neg_indices.is_empty() { 0 } else { q.dim }];
    for &k in &q.pos_indices {
        out[k as usize] += 1.0;
    }
    for &k in &q.neg_indices {
        neg[k as usize] += 1.0;
    }
    for (i, o) in out.iter_mut().enumerate() {
        let p = if *o != 0.0 { *o * q.pos_mass / q.pos_indices.len() as f64 } else { 0.0 };
        let n = match neg.get(i) {
            Some(&c) if c != 0.0 => c * q.neg_mass / q.neg_indices.len() as f64,
            _ => 0.0,
        };
        *o = p - n;
    }
    out
}

/// Bits needed to address one of `dim` coordinates, `⌈log₂ dim⌉`.
pub fn index_width(dim: usize) -> u32 {
    if dim <= 1 {
        0
    } else {
        usize::BITS - (dim - 1).leading_zeros()
    }
}

pub fn check_float_bits(float_bits: u32) -> Result<()> {
    match float_bits {
        32 | 64 => Ok(()),
        other => Err(Error::FloatBits(other)),
    }
}

/// Exact payload size of a message: transmitted masses plus packed indices.
pub fn message_bits(q: &QuantizedGradient, float_bits: u32) -> u64 {
    q.float_fields() * float_bits as u64 + q.index_count() as u64 * index_width(q.dim) as u64
}

/// Sub-Gaussian variance proxy `σ²_{r,M}` of the PPS oracle with batch `r`
/// and `m` samples, for raw gradients with ℓ₁ norm at most `b`.
pub fn pps_sigma2(r: usize, m: usize, n: usize, b: f64, sigma: f64) -> f64 {
    let n = n as f64;
    50.0 * (2.0 * (1.0 - 1.0 / n) * b * b / (std::f64::consts::E * m as f64) + sigma * sigma / r as f64)
}

/// `σ²_{r,M}` for the simplified encoder on simplex-valued gradients.
pub fn pps_sigma2_simplex(r: usize, m: usize, n: usize, sigma: f64) -> f64 {
    let nf = n as f64;
    50.0 * ((nf - 1.0) / (std::f64::consts::E * nf * m as f64) + sigma * sigma / r as f64)
}
