//! Problem instances accessed through conjugate (dual) oracles.
//!
//! The dual methods never touch `f` directly. They need the restoration
//! `x(μ, ξ) = ∇F*(μ, ξ)`, optionally the conjugate value `f*(μ)` for
//! telemetry, and the strong-convexity modulus of `f` (the reciprocal of the
//! Lipschitz constant of `∇f*`).

pub mod lse;
pub mod quadratic;
pub mod wb;

use rand::RngCore;

use crate::error::{Error, Result};

pub use lse::LogSumExp;
pub use quadratic::{quadratic_kkt_solution, BlockQuadratic, KktSolution, QuadraticLocal};
pub use wb::{wb_restore_barycentre, GaussianMeasure, SemiDiscreteWb, WbNode};

pub trait ConjugateOracle: Send + Sync {
    fn dim(&self) -> usize;

    /// One draw of `∇F*(μ, ξ)`.
    fn restore_sample(&self, mu: &[f64], rng: &mut dyn RngCore) -> Result<Vec<f64>>;

    /// `f*(μ)`, exact or from a fixed evaluation sample.
    fn conjugate_value(&self, mu: &[f64]) -> Option<f64>;

    fn primal_value(&self, _x: &[f64]) -> Option<f64> {
        None
    }

    /// `γ` such that `f` is `γ`-strongly convex.
    fn strong_convexity(&self) -> f64;

    /// Every restoration lies in the probability simplex.
    fn simplex_valued(&self) -> bool {
        false
    }
}

/// Mean of `r` restoration draws at `μ`.
pub fn restore_batch(oracle: &dyn ConjugateOracle, mu: &[f64], r: usize, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
    if r == 0 {
        return Err(Error::ZeroSamples);
    }
    let mut acc = vec![0.0; oracle.dim()];
    for _ in 0..r {
        let x = oracle.restore_sample(mu, rng)?;
        if x.len() != acc.len() {
            return Err(Error::DimensionMismatch { expected: acc.len(), got: x.len() });
        }
        acc.iter_mut().zip(&x).for_each(|(a, v)| *a += v);
    }
    let inv = 1.0 / r as f64;
    acc.iter_mut().for_each(|a| *a *= inv);
    Ok(acc)
}
