//! Baseline compressors and the Monte-Carlo second-moment meter.

use rand::seq::index;
use rand::{Rng, RngCore};

use super::{pps_decode, pps_encode, CategoricalSampler};
use crate::error::{Error, Result};
use crate::linalg::dist;

/// Keep the `m` largest-magnitude entries; ties go to the lowest index.
pub fn top_m_encode(g: &[f64], m: usize) -> Result<Vec<f64>> {
    if m > g.len() {
        return Err(Error::TooManyCoordinates { requested: m, dim: g.len() });
    }
    let mut order: Vec<usize> = (0..g.len()).collect();
    order.sort_by(|&a, &b| g[b].abs().total_cmp(&g[a].abs()).then(a.cmp(&b)));
    let mut out = vec![0.0; g.len()];
    for &k in &order[..m] {
        out[k] = g[k];
    }
    Ok(out)
}

/// Keep `m` uniformly chosen entries scaled by `n/m`.
pub fn random_m_encode<R: Rng + ?Sized>(g: &[f64], m: usize, rng: &mut R) -> Result<Vec<f64>> {
    let n = g.len();
    if m > n {
        return Err(Error::TooManyCoordinates { requested: m, dim: n });
    }
    if m == 0 {
        return Err(Error::ZeroSamples);
    }
    let scale = n as f64 / m as f64;
    let mut out = vec![0.0; n];
    for k in index::sample(rng, n, m) {
        out[k] = g[k] * scale;
    }
    Ok(out)
}

pub trait Compressor {
    fn compress(&self, x: &[f64], rng: &mut dyn RngCore) -> Result<Vec<f64>>;
}

pub struct IdentityCompressor;

impl Compressor for IdentityCompressor {
    fn compress(&self, x: &[f64], _rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        Ok(x.to_vec())
    }
}

pub struct PpsCompressor {
    pub m: usize,
}

impl Compressor for PpsCompressor {
    fn compress(&self, x: &[f64], rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        Ok(pps_decode(&pps_encode(x, self.m, rng)?))
    }
}

pub struct TopMCompressor {
    pub m: usize,
}

impl Compressor for TopMCompressor {
    fn compress(&self, x: &[f64], _rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        top_m_encode(x, self.m)
    }
}

pub struct RandomMCompressor {
    pub m: usize,
}

impl Compressor for RandomMCompressor {
    fn compress(&self, x: &[f64], rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        random_m_encode(x, self.m, rng)
    }
}

/// Draws `e_K` with `K ~ Categorical(x)`; meaningful for `x` on the simplex.
pub struct OneHotCompressor;

impl Compressor for OneHotCompressor {
    fn compress(&self, x: &[f64], rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        let k = CategoricalSampler::new(x)?.sample(rng);
        let mut out = vec![0.0; x.len()];
        out[k] = 1.0;
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompressorStats {
    pub empirical_second_moment: f64,
    pub relative_second_moment: f64,
    pub sample_count: usize,
}

/// Monte-Carlo estimate of `E‖Q(x) − x‖²` and its ratio to `‖x‖²`.
pub fn estimate_second_moment(
    compressor: &dyn Compressor,
    x: &[f64],
    trials: usize,
    rng: &mut dyn RngCore,
) -> Result<CompressorStats> {
    if trials == 0 {
        return Err(Error::ZeroSamples);
    }
    let mut acc = 0.0;
    for _ in 0..trials {
        let q = compressor.compress(x, rng)?;
        let d = dist(&q, x);
        acc += d * d;
    }
    let second = acc / trials as f64;
    let norm2: f64 = x.iter().map(|v| v * v).sum();
    let relative = if norm2 > 0.0 { second / norm2 } else { 0.0 };
    Ok(CompressorStats { empirical_second_moment: second, relative_second_moment: relative, sample_count: trials })
}
