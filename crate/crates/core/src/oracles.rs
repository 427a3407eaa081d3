//! Stochastic first-order oracles.
//!
//! An oracle returns draws `g(x, ξ)` with `E g(x, ξ) = ∇f(x)`. Mini-batching
//! averages `r` independent draws; a quantized call then compresses the batch
//! mean with PPS.

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::norm1;
use crate::quantize::{message_bits, pps_encode, pps_simplified_encode, QuantizedGradient};

pub trait GradientOracle {
    fn dim(&self) -> usize;

    /// One stochastic gradient draw at `x`.
    fn sample(&self, x: &[f64], rng: &mut dyn RngCore) -> Vec<f64>;

    /// Deterministic objective value, when available.
    fn value(&self, _x: &[f64]) -> Option<f64> {
        None
    }
}

/// Additive noise applied to an exact gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseModel {
    Exact,
    /// Independent `N(0, scale²)` components truncated at `±clip·scale`.
    TruncatedGaussian { scale: f64, clip: f64 },
}

impl NoiseModel {
    pub fn truncated_gaussian(scale: f64) -> Self {
        NoiseModel::TruncatedGaussian { scale, clip: 3.0 }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, NoiseModel::Exact) || matches!(self, NoiseModel::TruncatedGaussian { scale, .. } if *scale == 0.0)
    }

    /// Returns `base + η`. With an ℓ₁ bound `B`, the noise is shrunk by a
    /// factor depending only on `‖η‖₁` so that `‖base + η‖₁ ≤ B`; since the
    /// factor is even in `η` the draw stays unbiased. A `base` that already
    /// exceeds `B` is rescaled onto the bound.
    pub fn perturb<R: Rng + ?Sized>(&self, base: &[f64], l1_bound: Option<f64>, rng: &mut R) -> Vec<f64> {
        let base_l1 = norm1(base);
        if let Some(b) = l1_bound {
            if base_l1 > b {
                let s = b / base_l1;
                return base.iter().map(|v| v * s).collect();
            }
        }
        let (scale, clip) = match *self {
            NoiseModel::Exact => return base.to_vec(),
            NoiseModel::TruncatedGaussian { scale, clip } => (scale, clip),
        };
        if scale == 0.0 {
            return base.to_vec();
        }
        let mut eta: Vec<f64> = (0..base.len())
            .map(|_| loop {
                let z: f64 = rng.sample(StandardNormal);
                if z.abs() <= clip {
                    break z * scale;
                }
            })
            .collect();
        if let Some(b) = l1_bound {
            let eta_l1 = norm1(&eta);
            if base_l1 + eta_l1 > b && eta_l1 > 0.0 {
                let s = (b - base_l1) / eta_l1;
                eta.iter_mut().for_each(|e| *e *= s);
            }
        }
        base.iter().zip(&eta).map(|(g, e)| g + e).collect()
    }
}

type VecFn = Box<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
type ScalarFn = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Exact gradient plus a [`NoiseModel`], with an optional ℓ₁ clamp `B`.
pub struct NoisyOracle {
    dim: usize,
    gradient: VecFn,
    value: Option<ScalarFn>,
    pub noise: NoiseModel,
    pub l1_bound: Option<f64>,
}

impl NoisyOracle {
    pub fn new(dim: usize, gradient: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        Self { dim, gradient: Box::new(gradient), value: None, noise: NoiseModel::Exact, l1_bound: None }
    }

    pub fn with_value(mut self, value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.value = Some(Box::new(value));
        self
    }

    pub fn with_noise(mut self, noise: NoiseModel) -> Self {
        self.noise = noise;
        self
    }

    pub fn with_l1_bound(mut self, b: f64) -> Self {
        self.l1_bound = Some(b);
        self
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        (self.gradient)(x)
    }
}

impl GradientOracle for NoisyOracle {
    fn dim(&self) -> usize {
        self.dim
    }

    fn sample(&self, x: &[f64], rng: &mut dyn RngCore) -> Vec<f64> {
        self.noise.perturb(&(self.gradient)(x), self.l1_bound, rng)
    }

    fn value(&self, x: &[f64]) -> Option<f64> {
        self.value.as_ref().map(|f| f(x))
    }
}

/// Mean of `r` independent draws at `x`.
pub fn minibatch(oracle: &dyn GradientOracle, x: &[f64], r: usize, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
    if r == 0 {
        return Err(Error::ZeroSamples);
    }
    let mut acc = vec![0.0; oracle.dim()];
    for _ in 0..r {
        let g = oracle.sample(x, rng);
        if g.len() != acc.len() {
            return Err(Error::DimensionMismatch { expected: acc.len(), got: g.len() });
        }
        acc.iter_mut().zip(&g).for_each(|(a, v)| *a += v);
    }
    let inv = 1.0 / r as f64;
    acc.iter_mut().for_each(|a| *a *= inv);
    Ok(acc)
}

/// PPS-encoded mini-batch gradient and its bit cost. With `simplified`, a
/// non-negative batch mean uses the one-part encoding.
pub fn quantized_call(
    oracle: &dyn GradientOracle,
    x: &[f64],
    r: usize,
    m: usize,
    simplified: bool,
    float_bits: u32,
    rng: &mut dyn RngCore,
) -> Result<(QuantizedGradient, u64)> {
    let g = minibatch(oracle, x, r, rng)?;
    let q = if simplified && g.iter().all(|&v| v >= 0.0) {
        pps_simplified_encode(&g, m, rng)?
    } else {
        pps_encode(&g, m, rng)?
    };
    let bits = message_bits(&q, float_bits);
    Ok((q, bits))
}

/// Empirical noise level `sqrt(mean ‖g − ḡ‖²)` over `draws` samples at `x`.
pub fn empirical_sigma(oracle: &dyn GradientOracle, x: &[f64], draws: usize, rng: &mut dyn RngCore) -> f64 {
    let samples: Vec<Vec<f64>> = (0..draws.max(2)).map(|_| oracle.sample(x, rng)).collect();
    let n = samples.len() as f64;
    let mean: Vec<f64> = (0..oracle.dim()).map(|i| samples.iter().map(|s| s[i]).sum::<f64>() / n).collect();
    let ss: f64 = samples.iter().map(|s| s.iter().zip(&mean).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()).sum();
    (ss / (n - 1.0)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantize::{pps_decode, Encoding};
    use crate::rng::seeded;

    fn linear(c: Vec<f64>) -> NoisyOracle {
        NoisyOracle::new(c.len(), move |x: &[f64]| x.iter().zip(&c).map(|(a, b)| a - b).collect())
    }

    #[test]
    fn noiseless_batch_is_exact() {
        let o = linear(vec![1.0, -2.0, 0.5]);
        let mut rng = seeded(40);
        for r in [1, 3, 17] {
            assert_eq!(minibatch(&o, &[0.0; 3], r, &mut rng).unwrap(), vec![-1.0, 2.0, -0.5]);
        }
        assert!(minibatch(&o, &[0.0; 3], 0, &mut rng).is_err());
    }

    #[test]
    fn batch_mean_concentrates() {
        let sigma = 0.5;
        let o = linear(vec![1.0, 2.0]).with_noise(NoiseModel::truncated_gaussian(sigma));
        let mut rng = seeded(41);
        let r = 10_000;
        let g = minibatch(&o, &[0.0; 2], r, &mut rng).unwrap();
        for (gi, want) in g.iter().zip([-1.0, -2.0]) {
            assert!((gi - want).abs() < 6.0 * sigma / (r as f64).sqrt());
        }
    }

    #[test]
    fn single_draw_matches_sample() {
        let o = linear(vec![0.0; 4]).with_noise(NoiseModel::truncated_gaussian(1.0));
        let a = minibatch(&o, &[1.0; 4], 1, &mut seeded(42)).unwrap();
        let b = o.sample(&[1.0; 4], &mut seeded(42));
        assert_eq!(a, b);
    }

    #[test]
    fn l1_clamp_holds_exactly() {
        let b = 3.0;
        let o = linear(vec![0.5, -0.5, 1.0]).with_noise(NoiseModel::truncated_gaussian(2.0)).with_l1_bound(b);
        let mut rng = seeded(43);
        for _ in 0..5_000 {
            let g = o.sample(&[0.0; 3], &mut rng);
            assert!(norm1(&g) <= b * (1.0 + 1e-12));
        }
    }

    #[test]
    fn batch_variance_scales_inverse_r() {
        let o = linear(vec![0.0; 2]).with_noise(NoiseModel::truncated_gaussian(1.0));
        let mut rng = seeded(44);
        let reps = 4_000;
        let var_at = |r: usize, rng: &mut crate::rng::SimRng| {
            let xs: Vec<f64> = (0..reps).map(|_| minibatch(&o, &[0.0; 2], r, rng).unwrap()[0]).collect();
            let m = xs.iter().sum::<f64>() / reps as f64;
            xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (reps - 1) as f64
        };
        let v1 = var_at(1, &mut rng);
        for r in [4, 16, 64] {
            let ratio = var_at(r, &mut rng) * r as f64 / v1;
            assert!((ratio - 1.0).abs() < 0.1, "r={r} ratio={ratio}");
        }
    }

    #[test]
    fn quantized_call_reports_bits_and_converges() {
        let o = linear(vec![0.3, -0.2, 0.5]);
        let mut rng = seeded(45);
        let (q, bits) = quantized_call(&o, &[0.0; 3], 1, 1_000_000, false, 64, &mut rng).unwrap();
        assert_eq!(bits, message_bits(&q, 64));
        let d = pps_decode(&q);
        let err = crate::linalg::dist(&d, &[-0.3, 0.2, -0.5]);
        assert!(err < 1e-2, "{err}");

        let pos = linear(vec![-0.25, -0.75]);
        let (q, _) = quantized_call(&pos, &[0.0; 2], 1, 4, true, 64, &mut rng).unwrap();
        assert_eq!(q.encoding, Encoding::Simplified);
    }
}
