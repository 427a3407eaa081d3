//! `f(x) = ½ (x − c)ᵀ Q (x − c)` with `Q ≻ 0`, and block-diagonal sums of such
//! terms. The conjugate is explicit: `f*(μ) = ½ μᵀQ⁻¹μ + μᵀc`,
//! `∇f*(μ) = Q⁻¹μ + c`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};

use super::ConjugateOracle;
use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, matvec, sub, sym_eigenvalues};
use crate::oracles::NoiseModel;

#[derive(Debug, Clone)]
pub struct QuadraticLocal {
    pub c: Vec<f64>,
    pub q: DMatrix<f64>,
    q_inv: DMatrix<f64>,
    gamma: f64,
    /// Additive noise on the restoration `∇F*(μ, ξ)`.
    pub noise: NoiseModel,
}

impl QuadraticLocal {
    pub fn identity(c: Vec<f64>) -> Self {
        let n = c.len();
        Self { c, q: DMatrix::identity(n, n), q_inv: DMatrix::identity(n, n), gamma: 1.0, noise: NoiseModel::Exact }
    }

    pub fn new(c: Vec<f64>, q: DMatrix<f64>) -> Result<Self> {
        let n = c.len();
        if q.nrows() != n || q.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, got: q.nrows() });
        }
        if (&q - q.transpose()).amax() > 1e-12 * q.amax().max(1.0) {
            return Err(invalid("Q", "not symmetric"));
        }
        let gamma = sym_eigenvalues(&q).first().copied().unwrap_or(1.0);
        if !(gamma > 0.0) {
            return Err(invalid("Q", "not positive definite"));
        }
        let q_inv = q.clone().try_inverse().ok_or_else(|| invalid("Q", "singular"))?;
        Ok(Self { c, q, q_inv, gamma, noise: NoiseModel::Exact })
    }

    pub fn with_noise(mut self, noise: NoiseModel) -> Self {
        self.noise = noise;
        self
    }

    /// Random centre in `[-1, 1]ⁿ` and `Q = I + GGᵀ/n` with Gaussian `G`
    /// scaled by `spread`.
    pub fn random<R: Rng + ?Sized>(n: usize, spread: f64, rng: &mut R) -> Self {
        let c: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g = DMatrix::from_fn(n, n, |_, _| spread * rng.sample::<f64, _>(rand_distr::StandardNormal));
        let q = DMatrix::identity(n, n) + &g * g.transpose() / n as f64;
        let q = (&q + q.transpose()) * 0.5;
        Self::new(c, q).expect("I + GGᵀ is positive definite")
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let d = sub(x, &self.c);
        0.5 * dot(&d, &matvec(&self.q, &d))
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        matvec(&self.q, &sub(x, &self.c))
    }

    pub fn conjugate(&self, mu: &[f64]) -> f64 {
        0.5 * dot(mu, &matvec(&self.q_inv, mu)) + dot(mu, &self.c)
    }

    pub fn conjugate_gradient(&self, mu: &[f64]) -> Vec<f64> {
        let mut x = matvec(&self.q_inv, mu);
        x.iter_mut().zip(&self.c).for_each(|(v, c)| *v += c);
        x
    }

    /// Largest eigenvalue of `Q`, the Lipschitz constant of `∇f`.
    pub fn smoothness(&self) -> f64 {
        sym_eigenvalues(&self.q).last().copied().unwrap_or(0.0)
    }
}

impl ConjugateOracle for QuadraticLocal {
    fn dim(&self) -> usize {
        self.c.len()
    }

    fn restore_sample(&self, mu: &[f64], rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        if mu.len() != self.c.len() {
            return Err(Error::DimensionMismatch { expected: self.c.len(), got: mu.len() });
        }
        Ok(self.noise.perturb(&self.conjugate_gradient(mu), None, rng))
    }

    fn conjugate_value(&self, mu: &[f64]) -> Option<f64> {
        Some(self.conjugate(mu))
    }

    fn primal_value(&self, x: &[f64]) -> Option<f64> {
        Some(self.value(x))
    }

    fn strong_convexity(&self) -> f64 {
        self.gamma
    }
}

/// `Σ_i f_i(x_i)` over consecutive blocks of the stacked variable.
#[derive(Debug, Clone)]
pub struct BlockQuadratic {
    pub blocks: Vec<QuadraticLocal>,
}

impl BlockQuadratic {
    pub fn new(blocks: Vec<QuadraticLocal>) -> Self {
        Self { blocks }
    }

    fn split<'a>(&self, v: &'a [f64]) -> impl Iterator<Item = (&QuadraticLocal, &'a [f64])> {
        let mut off = 0;
        self.blocks.iter().map(move |b| {
            let s = &v[off..off + b.c.len()];
            off += b.c.len();
            (b, s)
        })
    }
}

impl ConjugateOracle for BlockQuadratic {
    fn dim(&self) -> usize {
        self.blocks.iter().map(|b| b.c.len()).sum()
    }

    fn restore_sample(&self, mu: &[f64], rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        if mu.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: mu.len() });
        }
        let mut out = Vec::with_capacity(mu.len());
        for (b, s) in self.split(mu) {
            out.extend(b.restore_sample(s, rng)?);
        }
        Ok(out)
    }

    fn conjugate_value(&self, mu: &[f64]) -> Option<f64> {
        Some(self.split(mu).map(|(b, s)| b.conjugate(s)).sum())
    }

    fn primal_value(&self, x: &[f64]) -> Option<f64> {
        Some(self.split(x).map(|(b, s)| b.value(s)).sum())
    }

    fn strong_convexity(&self) -> f64 {
        self.blocks.iter().map(|b| b.gamma).fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KktSolution {
    pub x: Vec<f64>,
    /// Multiplier with the sign convention of `φ(λ) = λᵀb + f*(−Aᵀλ)`,
    /// so that `x* = ∇f*(−Aᵀλ*)`.
    pub lambda: Vec<f64>,
    pub value: f64,
}

/// Minimiser of `Σ_i ½ (x_i − c_i)ᵀ Q_i (x_i − c_i)` subject to `Ax = b`, by a
/// direct solve of the KKT system `[Q Aᵀ; A 0] [x; λ] = [Qc; b]`.
/// Rank-deficient `A` is handled with a pseudo-inverse, which returns the
/// minimum-norm multiplier.
pub fn quadratic_kkt_solution(locals: &[QuadraticLocal], a: &DMatrix<f64>, b: &[f64]) -> Result<KktSolution> {
    let n: usize = locals.iter().map(|l| l.c.len()).sum();
    let m = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: a.ncols() });
    }
    if b.len() != m {
        return Err(Error::DimensionMismatch { expected: m, got: b.len() });
    }
    let mut k = DMatrix::zeros(n + m, n + m);
    let mut rhs = DVector::zeros(n + m);
    let mut off = 0;
    for l in locals {
        let d = l.c.len();
        k.view_mut((off, off), (d, d)).copy_from(&l.q);
        let qc = matvec(&l.q, &l.c);
        rhs.rows_mut(off, d).copy_from_slice(&qc);
        off += d;
    }
    k.view_mut((0, n), (n, m)).copy_from(&a.transpose());
    k.view_mut((n, 0), (m, n)).copy_from(a);
    rhs.rows_mut(n, m).copy_from_slice(b);

    let scale = k.amax().max(1.0);
    let sol = k
        .clone()
        .svd(true, true)
        .solve(&rhs, 1e-12 * scale * (n + m) as f64)
        .map_err(|e| Error::Numeric(e.to_string()))?;
    let resid = (&k * &sol - &rhs).amax();
    if resid > 1e-8 * rhs.amax().max(1.0) {
        return Err(Error::Numeric(format!("constraints inconsistent (KKT residual {resid:e})")));
    }
    let x: Vec<f64> = sol.rows(0, n).iter().copied().collect();
    let lambda: Vec<f64> = sol.rows(n, m).iter().copied().collect();
    let value = BlockQuadratic::new(locals.to_vec()).primal_value(&x).unwrap();
    Ok(KktSolution { x, lambda, value })
}
