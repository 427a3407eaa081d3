use std::sync::Arc;

use nalgebra::DMatrix;
use rand::RngCore;

use super::{OracleReply, QuantizedOracle};
use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, matvec, matvec_t, norm, spectral_norm, sub};
use crate::problems::{restore_batch, ConjugateOracle};
use crate::quantize::Codec;

/// Known optimum of an affine-constrained problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
    pub value: f64,
}

/// `min f(x)` s.t. `Ax = b`, with `f` available through its conjugate.
#[derive(Clone)]
pub struct AffineProblem {
    pub a: DMatrix<f64>,
    pub b: Vec<f64>,
    pub objective: Arc<dyn ConjugateOracle>,
    /// Lipschitz constant of `∇φ`.
    pub lipschitz: f64,
    /// Bound on `‖λ*‖`.
    pub radius: f64,
    pub reference: Option<Reference>,
    a_norm: f64,
}

impl AffineProblem {
    /// `L = ‖A‖₂² / γ`; `R` defaults to `‖λ*‖` when a reference is given.
    pub fn new(
        a: DMatrix<f64>,
        b: Vec<f64>,
        objective: Arc<dyn ConjugateOracle>,
        radius: Option<f64>,
        reference: Option<Reference>,
    ) -> Result<Self> {
        if a.ncols() != objective.dim() {
            return Err(Error::DimensionMismatch { expected: objective.dim(), got: a.ncols() });
        }
        if b.len() != a.nrows() {
            return Err(Error::DimensionMismatch { expected: a.nrows(), got: b.len() });
        }
        let a_norm = spectral_norm(&a);
        let lipschitz = a_norm * a_norm / objective.strong_convexity();
        if !(lipschitz >= 0.0 && lipschitz.is_finite()) {
            return Err(invalid("A", "dual Lipschitz constant must be finite"));
        }
        let radius = match (radius, &reference) {
            (Some(r), _) => r,
            (None, Some(re)) => norm(&re.lambda),
            (None, None) => return Err(invalid("R", "needs a value or a reference solution")),
        };
        if !(radius > 0.0) {
            return Err(invalid("R", "must be positive"));
        }
        Ok(Self { a, b, objective, lipschitz, radius, reference, a_norm })
    }

    pub fn a_norm(&self) -> f64 {
        self.a_norm
    }

    pub fn dual_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn primal_dim(&self) -> usize {
        self.a.ncols()
    }

    /// `x(μ, ξ) = ∇F*(μ, ξ)`, one draw.
    pub fn restore_primal(&self, mu: &[f64], rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        self.objective.restore_sample(mu, rng)
    }

    /// `g(λ, ξ) = b − A ∇F*(−Aᵀλ, ξ)`, one draw.
    pub fn dual_oracle(&self, lambda: &[f64], rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        Ok(self.dual_batch(lambda, 1, rng)?.0)
    }

    /// Mean of `r` draws of the dual gradient and the matching mean restoration.
    pub fn dual_batch(&self, lambda: &[f64], r: usize, rng: &mut dyn RngCore) -> Result<(Vec<f64>, Vec<f64>)> {
        if lambda.len() != self.dual_dim() {
            return Err(Error::DimensionMismatch { expected: self.dual_dim(), got: lambda.len() });
        }
        let mu: Vec<f64> = matvec_t(&self.a, lambda).into_iter().map(|v| -v).collect();
        let x = restore_batch(self.objective.as_ref(), &mu, r, rng)?;
        let g = sub(&self.b, &matvec(&self.a, &x));
        Ok((g, x))
    }

    /// `φ(λ) = λᵀb + f*(−Aᵀλ)`
    pub fn dual_value(&self, lambda: &[f64]) -> Option<f64> {
        let mu: Vec<f64> = matvec_t(&self.a, lambda).into_iter().map(|v| -v).collect();
        self.objective.conjugate_value(&mu).map(|v| dot(lambda, &self.b) + v)
    }
}

/// `‖Ax − b‖`
pub fn feasibility_gap(problem: &AffineProblem, x: &[f64]) -> f64 {
    norm(&sub(&matvec(&problem.a, x), &problem.b))
}

/// Quantized dual gradients of an [`AffineProblem`].
pub struct AffineOracle<'a, R: RngCore> {
    pub problem: &'a AffineProblem,
    pub codec: Codec,
    pub float_bits: u32,
    pub rng: R,
}

impl<R: RngCore> QuantizedOracle for AffineOracle<'_, R> {
    fn dim(&self) -> usize {
        self.problem.dual_dim()
    }

    fn call(&mut self, point: &[f64], _t: usize, r: usize, m: usize) -> Result<OracleReply> {
        let (g, x) = self.problem.dual_batch(point, r, &mut self.rng)?;
        let enc = self.codec.encode(&g, m, self.float_bits, &mut self.rng)?;
        Ok(OracleReply { message: enc.decoded, primal: Some(x), bits: enc.bits, calls: r as u64 })
    }
}
