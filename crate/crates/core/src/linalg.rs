use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Gaussian in canonical form: precision `Q` and linear term `h = Q μ`.
pub(crate) struct CanonicalGaussian {
    chol: Cholesky<f64, Dyn>,
    mean: DVector<f64>,
}

impl CanonicalGaussian {
    pub(crate) fn new(precision: DMatrix<f64>, linear: &DVector<f64>) -> Result<Self> {
        let chol = Cholesky::new(precision).ok_or(Error::NotPositiveDefinite)?;
        let mean = chol.solve(linear);
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(Self { chol, mean })
    }

    pub(crate) fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// `Q⁻¹` (used for closed-form checks).
    #[cfg_attr(not(test), allow(dead_code))]
    pub(crate) fn covariance(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    /// Draws from `N(μ, scale · Q⁻¹)`.
    pub(crate) fn sample<R: Rng + ?Sized>(&self, scale: f64, rng: &mut R) -> Vec<f64> {
        let n = self.mean.len();
        let z = DVector::from_fn(n, |_, _| StandardNormal.sample(rng));
        // Q = L Lᵀ, so Lᵀ⁻¹ z has covariance Q⁻¹.
        let dev = self
            .chol
            .l_dirty()
            .tr_solve_lower_triangular(&z)
            .expect("Cholesky factor has a nonzero diagonal");
        (&self.mean + dev * scale.sqrt()).iter().copied().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn draws_have_requested_moments() {
        let q = DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.0]);
        let h = DVector::from_vec(vec![1.0, -1.0]);
        let g = CanonicalGaussian::new(q.clone(), &h).unwrap();
        let cov = g.covariance();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let n = 200_000;
        let draws: Vec<Vec<f64>> = (0..n).map(|_| g.sample(2.0, &mut rng)).collect();
        for i in 0..2 {
            let m = draws.iter().map(|d| d[i]).sum::<f64>() / n as f64;
            assert_close!(m, g.mean()[i], 0.02);
        }
        let m0 = draws.iter().map(|d| d[0]).sum::<f64>() / n as f64;
        let m1 = draws.iter().map(|d| d[1]).sum::<f64>() / n as f64;
        let c01 = draws.iter().map(|d| (d[0] - m0) * (d[1] - m1)).sum::<f64>() / n as f64;
        assert_close!(c01, 2.0 * cov[(0, 1)], 0.02);
        assert_close!((q * g.mean())[0], 1.0, 1e-12);
    }

    #[test]
    fn rejects_indefinite() {
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(CanonicalGaussian::new(q, &DVector::zeros(2)).is_err());
    }
}
