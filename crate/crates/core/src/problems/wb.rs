//! Entropy-regularised semi-discrete Wasserstein barycentre.
//!
//! Each node holds a continuous measure `μ^i` with density `q^i`; the
//! barycentre lives on a fixed support `z_1..z_n`. Node `i` only needs the
//! dual of its regularised transport cost,
//!
//! ```text
//! W*(λ) = E_{x∼μ^i} [ γ ln Σ_j exp((λ_j − c(z_j, x))/γ) − γ ln q^i(x) ]
//! ∇W*(λ) = E_{x∼μ^i} [ softmax((λ − c(·, x))/γ) ]
//! ```
//!
//! estimated by Monte Carlo. Every per-sample gradient is a softmax output,
//! so restorations lie in the simplex and PPS can use the unit-mass encoding.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use super::ConjugateOracle;
use crate::error::{invalid, Error, Result};
use crate::rng::stream;

/// Product of independent normals.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMeasure {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl GaussianMeasure {
    pub fn new(mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        if mean.len() != std.len() {
            return Err(Error::DimensionMismatch { expected: mean.len(), got: std.len() });
        }
        if std.iter().any(|&s| !(s > 0.0)) {
            return Err(invalid("std", "must be positive"));
        }
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn sample(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        self.mean.iter().zip(&self.std).map(|(m, s)| m + s * rng.sample::<f64, _>(StandardNormal)).collect()
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        self.mean
            .iter()
            .zip(&self.std)
            .zip(x)
            .map(|((m, s), xi)| {
                let u = (xi - m) / s;
                -0.5 * u * u - s.ln() - 0.5 * (2.0 * PI).ln()
            })
            .sum()
    }
}

pub fn squared_euclidean(z: &[f64], x: &[f64]) -> f64 {
    z.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `0.1 ×` the mean squared distance over distinct support pairs.
pub fn default_gamma(support: &[Vec<f64>]) -> f64 {
    let n = support.len();
    if n < 2 {
        return 0.1;
    }
    let mut s = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            s += squared_euclidean(&support[i], &support[j]);
        }
    }
    0.1 * s / (n * (n - 1) / 2) as f64
}

/// `n` equispaced points on `[lo, hi]`.
pub fn grid_1d(n: usize, lo: f64, hi: f64) -> Vec<Vec<f64>> {
    if n == 1 {
        return vec![vec![0.5 * (lo + hi)]];
    }
    (0..n).map(|k| vec![lo + (hi - lo) * k as f64 / (n - 1) as f64]).collect()
}

#[derive(Debug, Clone)]
pub struct SemiDiscreteWb {
    pub support: Vec<Vec<f64>>,
    pub gamma: f64,
    pub measures: Vec<GaussianMeasure>,
}

impl SemiDiscreteWb {
    pub fn new(support: Vec<Vec<f64>>, gamma: f64, measures: Vec<GaussianMeasure>) -> Result<Self> {
        if !(gamma > 0.0) {
            return Err(invalid("gamma", "must be positive"));
        }
        if support.is_empty() || measures.is_empty() {
            return Err(invalid("support/measures", "must be non-empty"));
        }
        let d = support[0].len();
        for p in support.iter() {
            if p.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: p.len() });
            }
        }
        for mu in measures.iter() {
            if mu.dim() != d {
                return Err(Error::DimensionMismatch { expected: d, got: mu.dim() });
            }
        }
        Ok(Self { support, gamma, measures })
    }

    /// `m` one-dimensional Gaussians with means uniform in `[-2, 2]` and
    /// standard deviations uniform in `[0.5, 1.5]`, an `n`-point grid on
    /// `[-5, 5]`, and `γ` from [`default_gamma`] unless given.
    pub fn random_gaussians_1d<R: Rng + ?Sized>(m: usize, n: usize, gamma: Option<f64>, rng: &mut R) -> Result<Self> {
        let support = grid_1d(n, -5.0, 5.0);
        let measures = (0..m)
            .map(|_| GaussianMeasure::new(vec![rng.random_range(-2.0..2.0)], vec![rng.random_range(0.5..1.5)]))
            .collect::<Result<Vec<_>>>()?;
        let gamma = gamma.unwrap_or_else(|| default_gamma(&support));
        Self::new(support, gamma, measures)
    }

    pub fn n(&self) -> usize {
        self.support.len()
    }

    pub fn m(&self) -> usize {
        self.measures.len()
    }

    fn check_node(&self, node: usize, lambda: &[f64]) -> Result<()> {
        if node >= self.m() {
            return Err(invalid("node", format!("{node} out of range for {} measures", self.m())));
        }
        if lambda.len() != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), got: lambda.len() });
        }
        Ok(())
    }

    /// `(λ_j − c(z_j, x))/γ` for every support point, and its maximum.
    fn exponents(&self, lambda: &[f64], x: &[f64]) -> (Vec<f64>, f64) {
        let e: Vec<f64> =
            self.support.iter().zip(lambda).map(|(z, l)| (l - squared_euclidean(z, x)) / self.gamma).collect();
        let top = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (e, top)
    }

    /// `softmax((λ − c(·, x))/γ)`
    pub fn sample_softmax(&self, lambda: &[f64], x: &[f64]) -> Vec<f64> {
        let (e, top) = self.exponents(lambda, x);
        let w: Vec<f64> = e.iter().map(|v| (v - top).exp()).collect();
        let s: f64 = w.iter().sum();
        w.into_iter().map(|v| v / s).collect()
    }

    /// `γ ln Σ_j exp((λ_j − c(z_j, x))/γ) − γ ln q(x)`
    pub fn integrand(&self, node: usize, lambda: &[f64], x: &[f64]) -> Result<f64> {
        let log_q = self.measures[node].log_density(x);
        if !log_q.is_finite() {
            return Err(Error::ZeroDensity);
        }
        let (e, top) = self.exponents(lambda, x);
        let lse = top + e.iter().map(|v| (v - top).exp()).sum::<f64>().ln();
        Ok(self.gamma * (lse - log_q))
    }

    pub fn draw(&self, node: usize, r: usize, rng: &mut dyn RngCore) -> Vec<Vec<f64>> {
        (0..r).map(|_| self.measures[node].sample(rng)).collect()
    }

    pub fn conjugate_value_on(&self, node: usize, lambda: &[f64], samples: &[Vec<f64>]) -> Result<f64> {
        self.check_node(node, lambda)?;
        if samples.is_empty() {
            return Err(Error::ZeroSamples);
        }
        let mut s = 0.0;
        for x in samples {
            s += self.integrand(node, lambda, x)?;
        }
        Ok(s / samples.len() as f64)
    }

    pub fn conjugate_gradient_on(&self, node: usize, lambda: &[f64], samples: &[Vec<f64>]) -> Result<Vec<f64>> {
        self.check_node(node, lambda)?;
        if samples.is_empty() {
            return Err(Error::ZeroSamples);
        }
        let mut acc = vec![0.0; self.n()];
        for x in samples {
            if !self.measures[node].log_density(x).is_finite() {
                return Err(Error::ZeroDensity);
            }
            acc.iter_mut().zip(self.sample_softmax(lambda, x)).for_each(|(a, p)| *a += p);
        }
        let inv = 1.0 / samples.len() as f64;
        acc.iter_mut().for_each(|a| *a *= inv);
        Ok(acc)
    }

    /// Monte-Carlo `W*(λ)` over `r` fresh draws from node `node`'s measure.
    pub fn wb_conjugate_value(&self, node: usize, lambda: &[f64], r: usize, rng: &mut dyn RngCore) -> Result<f64> {
        self.check_node(node, lambda)?;
        let xs = self.draw(node, r, rng);
        self.conjugate_value_on(node, lambda, &xs)
    }

    /// Monte-Carlo `∇W*(λ)` over `r` fresh draws; lies in the simplex.
    pub fn wb_conjugate_gradient(&self, node: usize, lambda: &[f64], r: usize, rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        self.check_node(node, lambda)?;
        let xs = self.draw(node, r, rng);
        self.conjugate_gradient_on(node, lambda, &xs)
    }

    /// Conjugate oracle of node `i`. Values are evaluated on `eval_samples`
    /// draws fixed at construction (stream `(seed, i)`), so telemetry is
    /// deterministic and comparable across runs.
    pub fn node(self: &Arc<Self>, i: usize, eval_samples: usize, seed: u64) -> Result<WbNode> {
        if i >= self.m() {
            return Err(invalid("node", format!("{i} out of range")));
        }
        let mut rng = stream(seed, &[0x3b, i as u64]);
        let eval = self.draw(i, eval_samples.max(1), &mut rng);
        Ok(WbNode { problem: Arc::clone(self), index: i, eval })
    }
}

#[derive(Debug, Clone)]
pub struct WbNode {
    pub problem: Arc<SemiDiscreteWb>,
    pub index: usize,
    eval: Vec<Vec<f64>>,
}

impl ConjugateOracle for WbNode {
    fn dim(&self) -> usize {
        self.problem.n()
    }

    fn restore_sample(&self, mu: &[f64], rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        let p = &self.problem;
        if mu.len() != p.n() {
            return Err(Error::DimensionMismatch { expected: p.n(), got: mu.len() });
        }
        let x = p.measures[self.index].sample(rng);
        Ok(p.sample_softmax(mu, &x))
    }

    fn conjugate_value(&self, mu: &[f64]) -> Option<f64> {
        self.problem.conjugate_value_on(self.index, mu, &self.eval).ok()
    }

    fn strong_convexity(&self) -> f64 {
        self.problem.gamma
    }

    fn simplex_valued(&self) -> bool {
        true
    }
}

/// Node average of the per-node weights, clipped at zero and renormalised.
pub fn wb_restore_barycentre(x_nodes: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = x_nodes.first().ok_or_else(|| invalid("x_nodes", "empty"))?;
    let mut avg = vec![0.0; first.len()];
    for x in x_nodes {
        if x.len() != avg.len() {
            return Err(Error::DimensionMismatch { expected: avg.len(), got: x.len() });
        }
        avg.iter_mut().zip(x).for_each(|(a, v)| *a += v.max(0.0));
    }
    let s: f64 = avg.iter().sum();
    if !(s > 0.0) {
        return Err(Error::ZeroMass);
    }
    avg.iter_mut().for_each(|a| *a /= s);
    Ok(avg)
}
