//! Distribution families: Gaussians, identity-covariance mixtures, the
//! unit-covariance Gaussian exponential family, invertible feedforward
//! generators with exact densities, and injective generators `ℝᵏ → ℝᵈ`.

mod activation;
mod gaussian;
mod injective;
mod invertible;
mod json;

pub use activation::Activation;
pub use gaussian::{ExpFamily, ExpFamilySpec, GaussianSpec, MixtureSpec};
pub use injective::{InjectiveGeneratorSpec, Regularity};
pub use invertible::{Constraints, InvertibleGeneratorSpec, Layer};
pub use json::MatrixDto;

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::{rng_from_seed, Rng};

/// Source of i.i.d. draws. Rows of the returned matrix are samples.
pub trait Sampler: Sync {
    fn dim(&self) -> usize;

    fn sample_with(&self, n: usize, rng: &mut Rng) -> DMatrix<f64>;

    /// `n` draws from a fresh stream for `seed`.
    fn sample(&self, n: usize, seed: u64) -> DMatrix<f64> {
        self.sample_with(n, &mut rng_from_seed(seed))
    }
}

/// Families with a closed-form log density.
pub trait LogDensity: Sync {
    fn log_density(&self, x: &DVector<f64>) -> Result<f64>;

    /// Log density of every row of `x`.
    fn log_density_rows(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        let mut out = DVector::zeros(x.nrows());
        for i in 0..x.nrows() {
            out[i] = self.log_density(&x.row(i).transpose())?;
        }
        Ok(out)
    }
}

impl<S: Sampler + ?Sized> Sampler for &S {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn sample_with(&self, n: usize, rng: &mut Rng) -> DMatrix<f64> {
        (**self).sample_with(n, rng)
    }
}

impl<D: LogDensity + ?Sized> LogDensity for &D {
    fn log_density(&self, x: &DVector<f64>) -> Result<f64> {
        (**self).log_density(x)
    }

    fn log_density_rows(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        (**self).log_density_rows(x)
    }
}

/// Empirical distribution over a fixed point set, resampled uniformly with
/// replacement.
#[derive(Clone, Debug)]
pub struct Empirical {
    pub points: DMatrix<f64>,
}

impl Sampler for Empirical {
    fn dim(&self) -> usize {
        self.points.ncols()
    }

    fn sample_with(&self, n: usize, rng: &mut Rng) -> DMatrix<f64> {
        use rand::Rng as _;
        let m = self.points.nrows();
        let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..m)).collect();
        self.points.select_rows(&rows)
    }
}

/// Samples from any sampler shifted by a fixed vector.
#[derive(Clone, Debug)]
pub struct Shifted<S> {
    pub inner: S,
    pub shift: DVector<f64>,
}

impl<S: Sampler> Sampler for Shifted<S> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn sample_with(&self, n: usize, rng: &mut Rng) -> DMatrix<f64> {
        let mut x = self.inner.sample_with(n, rng);
        for mut row in x.row_iter_mut() {
            row += self.shift.transpose();
        }
        x
    }
}

/// Standard normal `n×d` matrix.
pub(crate) fn standard_normal(n: usize, d: usize, rng: &mut Rng) -> DMatrix<f64> {
    crate::linalg::gaussian_matrix(n, d, rng)
}
