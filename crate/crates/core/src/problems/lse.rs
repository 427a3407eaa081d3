//! `f(x) = ln Σ_j b_j exp(A_jᵀ x)` with `A ∈ ℝ^{n×m}` (one row per term) and
//! non-negative weights `b`.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::linalg::matvec;
use crate::oracles::{NoiseModel, NoisyOracle};

#[derive(Debug, Clone)]
pub struct LogSumExp {
    pub a: DMatrix<f64>,
    pub b: Vec<f64>,
}

impl LogSumExp {
    pub fn new(a: DMatrix<f64>, b: Vec<f64>) -> Result<Self> {
        if b.len() != a.nrows() {
            return Err(Error::DimensionMismatch { expected: a.nrows(), got: b.len() });
        }
        if b.iter().any(|&w| !(w >= 0.0)) || !b.iter().any(|&w| w > 0.0) {
            return Err(invalid("b", "weights must be non-negative with a positive entry"));
        }
        Ok(Self { a, b })
    }

    /// Random row-stochastic `A` and positive weights.
    pub fn random_row_stochastic<R: Rng + ?Sized>(terms: usize, dim: usize, rng: &mut R) -> Self {
        let mut a = DMatrix::from_fn(terms, dim, |_, _| rng.random_range(0.01..1.0));
        for mut row in a.row_iter_mut() {
            let s = row.sum();
            row /= s;
        }
        let b = (0..terms).map(|_| rng.random_range(0.1..2.0)).collect();
        Self { a, b }
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    /// `ln b_j + A_jᵀ x` for every term; `-∞` for zero weights.
    fn exponents(&self, x: &[f64]) -> Vec<f64> {
        matvec(&self.a, x).into_iter().zip(&self.b).map(|(ax, &w)| if w > 0.0 { ax + w.ln() } else { f64::NEG_INFINITY }).collect()
    }

    fn softmax(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let e = self.exponents(x);
        let top = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = e.iter().map(|v| (v - top).exp()).collect();
        let s: f64 = w.iter().sum();
        (top + s.ln(), w.into_iter().map(|v| v / s).collect())
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.softmax(x).0
    }

    /// `Σ_j p_j A_j` with `p` the softmax weights of the terms.
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let (_, p) = self.softmax(x);
        (0..self.a.ncols()).map(|i| self.a.column(i).iter().zip(&p).map(|(aji, pj)| aji * pj).sum()).collect()
    }

    /// `max_i Σ_j A_ji²`
    pub fn lipschitz(&self) -> f64 {
        self.a.column_iter().map(|c| c.norm_squared()).fold(0.0, f64::max)
    }

    /// Stochastic first-order oracle: exact gradient plus `noise`, clamped to
    /// `‖g‖₁ ≤ l1_bound` when given.
    pub fn oracle(&self, noise: NoiseModel, l1_bound: Option<f64>) -> NoisyOracle {
        let g = self.clone();
        let v = self.clone();
        let o = NoisyOracle::new(self.dim(), move |x: &[f64]| g.gradient(x)).with_value(move |x: &[f64]| v.value(x)).with_noise(noise);
        match l1_bound {
            Some(b) => o.with_l1_bound(b),
            None => o,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::norm1;
    use crate::rng::seeded;

    #[test]
    fn value_examples() {
        let f = LogSumExp::new(DMatrix::identity(2, 2), vec![1.0, 1.0]).unwrap();
        assert!((f.value(&[0.0, 0.0]) - 2f64.ln()).abs() < 1e-15);
        let g = LogSumExp::new(DMatrix::from_row_slice(2, 2, &[0.3, 0.7, 0.5, 0.5]), vec![1.0, 0.0]).unwrap();
        assert!((g.value(&[2.0, -1.0]) - (0.6 - 0.7)).abs() < 1e-15);
        assert!(LogSumExp::new(DMatrix::identity(2, 2), vec![0.0, 0.0]).is_err());
        assert!(LogSumExp::new(DMatrix::identity(2, 2), vec![1.0]).is_err());
    }

    #[test]
    fn no_overflow_for_large_arguments() {
        // ln(e^1000 + e^999) = 1000 + ln(1 + e^-1)
        let f = LogSumExp::new(DMatrix::identity(2, 2), vec![1.0, 1.0]).unwrap();
        let v = f.value(&[1000.0, 999.0]);
        assert!((v - (1000.0 + (1.0 + (-1f64).exp()).ln())).abs() < 1e-12);
        let g = f.gradient(&[1000.0, 999.0]);
        let p = 1.0 / (1.0 + (-1f64).exp());
        assert!((g[0] - p).abs() < 1e-15 && (g[1] - (1.0 - p)).abs() < 1e-15);
    }

    #[test]
    fn gradient_at_zero_is_weighted_column_mean() {
        let mut rng = seeded(4);
        let mut f = LogSumExp::random_row_stochastic(6, 4, &mut rng);
        f.b = vec![1.0; 6];
        let g = f.gradient(&[0.0; 4]);
        for (i, gi) in g.iter().enumerate() {
            let mean = f.a.column(i).sum() / 6.0;
            assert!((gi - mean).abs() < 1e-15);
        }
        assert!((norm1(&g) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lipschitz_homogeneity() {
        let mut rng = seeded(5);
        let f = LogSumExp::random_row_stochastic(5, 3, &mut rng);
        let g = LogSumExp::new(&f.a * 2.0, f.b.clone()).unwrap();
        assert!((g.lipschitz() - 4.0 * f.lipschitz()).abs() < 1e-14);
        let perm = LogSumExp::new(DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0]), vec![1.0; 3]).unwrap();
        assert_eq!(perm.lipschitz(), 1.0);
    }
}
