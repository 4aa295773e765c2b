use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::json::MatrixDto;
use super::{standard_normal, LogDensity, Sampler};
use crate::error::{Error, Result};
use crate::linalg::{random_orthogonal, symmetric_eigenvalues};
use crate::special::{logsumexp, LN_2PI};
use crate::Rng;

/// `N(mean, covariance)` with a cached Cholesky factor.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "GaussianDto", into = "GaussianDto")]
pub struct GaussianSpec {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    chol: Cholesky<f64, nalgebra::Dyn>,
}

impl GaussianSpec {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if covariance.shape() != (d, d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: covariance.nrows(),
            });
        }
        let asym = (&covariance - covariance.transpose()).abs().max();
        if asym > 1e-12 * covariance.abs().max().max(1.0) {
            return Err(Error::NotPositiveDefinite("covariance is not symmetric"));
        }
        let chol =
            Cholesky::new(covariance.clone()).ok_or(Error::NotPositiveDefinite("covariance"))?;
        Ok(Self {
            mean,
            covariance,
            chol,
        })
    }

    pub fn standard(d: usize) -> Self {
        Self::new(DVector::zeros(d), DMatrix::identity(d, d))
            .expect("identity is positive definite")
    }

    /// Random member of the class with covariance spectrum in
    /// `[σ_min², σ_max²]` and `‖mean‖ ≤ radius`.
    pub fn random(d: usize, sigma_min: f64, sigma_max: f64, radius: f64, rng: &mut Rng) -> Self {
        let u = random_orthogonal(d, rng);
        let s = DVector::from_fn(d, |_, _| rng.random_range(sigma_min..=sigma_max).powi(2));
        let cov = &u * DMatrix::from_diagonal(&s) * u.transpose();
        let cov = (&cov + cov.transpose()) * 0.5;
        let dir = crate::linalg::gaussian_vector(d, rng).normalize();
        let r = radius * rng.random::<f64>();
        Self::new(dir * r, cov).expect("constructed positive definite")
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Checks covariance eigenvalues against `[σ_min², σ_max²]` and the mean
    /// against the radius `D`.
    pub fn check_bounds(&self, sigma_min: f64, sigma_max: f64, radius: f64) -> Result<()> {
        let eig = symmetric_eigenvalues(&self.covariance);
        let tol = 1e-9;
        if eig.min() < sigma_min * sigma_min - tol || eig.max() > sigma_max * sigma_max + tol {
            return Err(Error::ConstraintViolation(format!(
                "covariance spectrum [{}, {}] outside [{}, {}]",
                eig.min(),
                eig.max(),
                sigma_min * sigma_min,
                sigma_max * sigma_max
            )));
        }
        if self.mean.norm() > radius + tol {
            return Err(Error::ConstraintViolation(format!(
                "mean norm {} exceeds {radius}",
                self.mean.norm()
            )));
        }
        Ok(())
    }

    pub(crate) fn log_det_covariance(&self) -> f64 {
        2.0 * self.chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>()
    }
}

impl Sampler for GaussianSpec {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn sample_with(&self, n: usize, rng: &mut Rng) -> DMatrix<f64> {
        let z = standard_normal(n, self.dim(), rng);
        let mut x = z * self.chol.l().transpose();
        for mut row in x.row_iter_mut() {
            row += self.mean.transpose();
        }
        x
    }
}

impl LogDensity for GaussianSpec {
    fn log_density(&self, x: &DVector<f64>) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        let r = self
            .chol
            .l()
            .solve_lower_triangular(&(x - &self.mean))
            .expect("nonsingular factor");
        let d = self.dim() as f64;
        Ok(-0.5 * r.norm_squared() - 0.5 * self.log_det_covariance() - 0.5 * d * LN_2PI)
    }
}

#[derive(Serialize, Deserialize)]
struct GaussianDto {
    mean: Vec<f64>,
    covariance: MatrixDto,
}

impl From<GaussianSpec> for GaussianDto {
    fn from(g: GaussianSpec) -> Self {
        Self {
            mean: g.mean.as_slice().to_vec(),
            covariance: (&g.covariance).into(),
        }
    }
}

impl TryFrom<GaussianDto> for GaussianSpec {
    type Error = Error;

    fn try_from(dto: GaussianDto) -> Result<Self> {
        GaussianSpec::new(DVector::from_vec(dto.mean), dto.covariance.try_into()?)
    }
}

/// `Σ wᵢ N(μᵢ, I)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
}

impl MixtureSpec {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>) -> Result<Self> {
        let spec = Self { weights, means };
        spec.validate_shape()?;
        Ok(spec)
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    fn validate_shape(&self) -> Result<()> {
        if self.weights.is_empty() || self.weights.len() != self.means.len() {
            return Err(Error::InvalidSpec(
                "mixture needs one mean per weight".into(),
            ));
        }
        let d = self.dim();
        if self.means.iter().any(|m| m.len() != d) {
            return Err(Error::InvalidSpec(
                "mixture means differ in dimension".into(),
            ));
        }
        let total: f64 = self.weights.iter().sum();
        if self.weights.iter().any(|&w| !(w > 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidSpec(
                "mixture weights must be positive and sum to 1".into(),
            ));
        }
        Ok(())
    }

    /// Checks `wᵢ ≥ exp(-B_w)` and `‖μᵢ‖ ≤ D`.
    pub fn check_bounds(&self, log_weight_bound: f64, radius: f64) -> Result<()> {
        let floor = (-log_weight_bound).exp();
        if self.weights.iter().any(|&w| w < floor) {
            return Err(Error::ConstraintViolation(format!(
                "mixture weight below {floor}"
            )));
        }
        for m in &self.means {
            let n = m.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > radius {
                return Err(Error::ConstraintViolation(format!(
                    "mixture mean norm {n} exceeds {radius}"
                )));
            }
        }
        Ok(())
    }
}

impl Sampler for MixtureSpec {
    fn dim(&self) -> usize {
        MixtureSpec::dim(self)
    }

    fn sample_with(&self, n: usize, rng: &mut Rng) -> DMatrix<f64> {
        let d = self.dim();
        let mut x = DMatrix::zeros(n, d);
        for i in 0..n {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut j = self.k() - 1;
            for (c, &w) in self.weights.iter().enumerate() {
                acc += w;
                if u < acc {
                    j = c;
                    break;
                }
            }
            for c in 0..d {
                x[(i, c)] = self.means[j][c] + rng.sample::<f64, _>(rand_distr::StandardNormal);
            }
        }
        x
    }
}

impl LogDensity for MixtureSpec {
    fn log_density(&self, x: &DVector<f64>) -> Result<f64> {
        let d = self.dim();
        if x.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: x.len(),
            });
        }
        let terms: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.means)
            .map(|(w, m)| {
                let sq: f64 = m.iter().zip(x.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                w.ln() - 0.5 * sq
            })
            .collect();
        Ok(logsumexp(&terms) - 0.5 * d as f64 * LN_2PI)
    }
}

/// Exponential families with a known log-partition function.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExpFamily {
    /// `N(θ, I)`: `T(x) = x`, `A(θ) = ‖θ‖²/2`, base measure `N(0, I)`.
    UnitGaussianMean,
}

impl ExpFamily {
    pub fn sufficient_statistic(self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            ExpFamily::UnitGaussianMean => x.clone(),
        }
    }

    pub fn log_partition(self, theta: &DVector<f64>) -> f64 {
        match self {
            ExpFamily::UnitGaussianMean => 0.5 * theta.norm_squared(),
        }
    }

    pub fn log_partition_grad(self, theta: &DVector<f64>) -> DVector<f64> {
        match self {
            ExpFamily::UnitGaussianMean => theta.clone(),
        }
    }

    /// Bounds `γ ≤ ∇²A ≤ β` on the Hessian of the log partition.
    pub fn curvature_bounds(self) -> (f64, f64) {
        match self {
            ExpFamily::UnitGaussianMean => (1.0, 1.0),
        }
    }
}

/// One member `p_θ` of an [`ExpFamily`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExpFamilySpec {
    pub family: ExpFamily,
    pub theta: Vec<f64>,
}

impl ExpFamilySpec {
    pub fn new(family: ExpFamily, theta: DVector<f64>) -> Self {
        Self {
            family,
            theta: theta.as_slice().to_vec(),
        }
    }

    pub fn theta(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.theta)
    }
}

impl Sampler for ExpFamilySpec {
    fn dim(&self) -> usize {
        self.theta.len()
    }

    fn sample_with(&self, n: usize, rng: &mut Rng) -> DMatrix<f64> {
        match self.family {
            ExpFamily::UnitGaussianMean => {
                let mut x = standard_normal(n, self.theta.len(), rng);
                for mut row in x.row_iter_mut() {
                    for (v, t) in row.iter_mut().zip(&self.theta) {
                        *v += t;
                    }
                }
                x
            }
        }
    }
}

impl LogDensity for ExpFamilySpec {
    fn log_density(&self, x: &DVector<f64>) -> Result<f64> {
        let theta = self.theta();
        if x.len() != theta.len() {
            return Err(Error::DimensionMismatch {
                expected: theta.len(),
                found: x.len(),
            });
        }
        match self.family {
            ExpFamily::UnitGaussianMean => {
                let t = self.family.sufficient_statistic(x);
                let d = x.len() as f64;
                Ok(theta.dot(&t)
                    - self.family.log_partition(&theta)
                    - 0.5 * x.norm_squared()
                    - 0.5 * d * LN_2PI)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng_from_seed;

    #[test]
    fn standard_normal_log_density_at_origin() {
        let g = GaussianSpec::standard(1);
        let v = g.log_density(&DVector::from_vec(vec![0.0])).unwrap();
        assert!((v + 0.5 * LN_2PI).abs() < 1e-15);
    }

    #[test]
    fn gaussian_sample_mean_is_near_zero() {
        let g = GaussianSpec::standard(3);
        let x = g.sample(100_000, 1);
        for c in 0..3 {
            assert!(x.column(c).mean().abs() < 3.0 / (1e5f64).sqrt());
        }
    }

    #[test]
    fn random_gaussian_respects_bounds() {
        let mut rng = rng_from_seed(2);
        for d in 1..8 {
            let g = GaussianSpec::random(d, 0.5, 2.0, 3.0, &mut rng);
            g.check_bounds(0.5, 2.0, 3.0).unwrap();
        }
    }

    #[test]
    fn non_pd_rejected() {
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(GaussianSpec::new(DVector::zeros(2), c).is_err());
    }

    #[test]
    fn single_component_mixture() {
        let m = MixtureSpec::new(vec![1.0], vec![vec![0.0]]).unwrap();
        let v = m.log_density(&DVector::from_vec(vec![0.0])).unwrap();
        assert!((v + 0.5 * LN_2PI).abs() < 1e-15);
    }

    #[test]
    fn symmetric_mixture_at_origin() {
        let a = 1.7;
        let m = MixtureSpec::new(vec![0.5, 0.5], vec![vec![a], vec![-a]]).unwrap();
        let v = m.log_density(&DVector::from_vec(vec![0.0])).unwrap();
        assert!((v - (-a * a / 2.0 - 0.5 * LN_2PI)).abs() < 1e-14);
    }

    #[test]
    fn mixture_matches_naive_sum() {
        let mut rng = rng_from_seed(4);
        let m = MixtureSpec::new(
            vec![0.2, 0.3, 0.5],
            (0..3)
                .map(|_| (0..2).map(|_| rng.random_range(-2.0..2.0)).collect())
                .collect(),
        )
        .unwrap();
        for _ in 0..20 {
            let x = DVector::from_fn(2, |_, _| rng.random_range(-3.0..3.0));
            let naive: f64 = m
                .weights
                .iter()
                .zip(&m.means)
                .map(|(w, mu)| {
                    let sq: f64 = mu.iter().zip(x.iter()).map(|(a, b)| (a - b).powi(2)).sum();
                    w * (-0.5 * sq).exp() / (2.0 * std::f64::consts::PI)
                })
                .sum();
            assert!((m.log_density(&x).unwrap() - naive.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn exp_family_at_zero_is_standard_normal() {
        let e = ExpFamilySpec::new(ExpFamily::UnitGaussianMean, DVector::zeros(2));
        let g = GaussianSpec::standard(2);
        let x = DVector::from_vec(vec![0.3, -1.2]);
        assert!((e.log_density(&x).unwrap() - g.log_density(&x).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn exp_family_moment_matches_gradient() {
        let theta = DVector::from_vec(vec![0.4, -0.7]);
        let e = ExpFamilySpec::new(ExpFamily::UnitGaussianMean, theta.clone());
        let x = e.sample(1_000_000, 8);
        let grad = ExpFamily::UnitGaussianMean.log_partition_grad(&theta);
        for c in 0..2 {
            assert!((x.column(c).mean() - grad[c]).abs() < 0.01);
        }
    }

    #[test]
    fn gaussian_json_round_trip_is_lossless() {
        let mut rng = rng_from_seed(6);
        let g = GaussianSpec::random(4, 0.5, 2.0, 3.0, &mut rng);
        let s = serde_json::to_string(&g).unwrap();
        let back: GaussianSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(back.mean(), g.mean());
        assert_eq!(back.covariance(), g.covariance());
    }
}
