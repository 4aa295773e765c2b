use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{laplace_hessian, locate_maximizer, log_normalizer, objective_rows, LaplaceConfig, SmoothedDensityQuery};
use crate::error::{Error, Result};
use crate::generators::InjectiveGeneratorSpec;
use crate::linalg::gaussian_matrix;
use crate::special::logsumexp;
use crate::{rng_from_seed, Rng};

/// Probability of drawing from the prior instead of the local Gaussian.
const DEFENSIVE_WEIGHT: f64 = 0.1;
/// Inflation of the local Gaussian's covariance over `(-H)⁻¹`.
const PROPOSAL_SCALE: f64 = 2.0;
const MIN_ESS: f64 = 100.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    /// Standard error of `value` by the delta method.
    pub stderr: f64,
    pub ess: f64,
    /// False when the effective sample size is below 100.
    pub reliable: bool,
}

/// `N(mean, L Lᵀ)` in `k` dimensions.
struct Gaussian {
    mean: DVector<f64>,
    chol: DMatrix<f64>,
    prec_chol_inv: DMatrix<f64>,
    log_norm: f64,
}

impl Gaussian {
    fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let k = mean.len() as f64;
        let chol = cov.cholesky().ok_or(Error::NotPositiveDefinite("proposal covariance"))?;
        let l = chol.l();
        let log_det: f64 = 2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let prec_chol_inv = l.clone().try_inverse().ok_or(Error::NotPositiveDefinite("proposal covariance"))?;
        Ok(Self {
            mean,
            chol: l,
            prec_chol_inv,
            log_norm: -0.5 * (k * (2.0 * std::f64::consts::PI).ln() + log_det),
        })
    }

    fn sample(&self, rng: &mut Rng) -> DVector<f64> {
        let e = gaussian_matrix(self.mean.len(), 1, rng).column(0).into_owned();
        &self.mean + &self.chol * e
    }

    fn log_pdf(&self, z: &DVector<f64>) -> f64 {
        let u = &self.prec_chol_inv * (z - &self.mean);
        self.log_norm - 0.5 * u.norm_squared()
    }
}

/// Importance-sampling estimate of `log p^β(x)`: the integral of
/// `exp(f)` over `‖z‖ ≤ D_z` with proposal
/// `0.9·N(z*, 2(-H)⁻¹) + 0.1·N(0, I/2)`, plus the same normalizer as the
/// Laplace approximation. `(-H)` has its eigenvalues floored at 1.
pub fn mc_log_density_oracle(
    spec: &InjectiveGeneratorSpec,
    query: &SmoothedDensityQuery,
    beta: f64,
    n_mc: usize,
    seed: u64,
) -> Result<McEstimate> {
    if n_mc < 2 {
        return Err(Error::InvalidSpec("oracle needs at least 2 samples".into()));
    }
    let x = query.point();
    let config = LaplaceConfig::with_beta(beta);
    let (z_star, _) = locate_maximizer(spec, &x, &config)?;
    let k = z_star.len();
    let eig = SymmetricEigen::new(-laplace_hessian(spec, &x, beta, &z_star)?);
    let inv = eig.eigenvalues.map(|l| PROPOSAL_SCALE / l.max(1.0));
    let cov = &eig.eigenvectors * DMatrix::from_diagonal(&inv) * eig.eigenvectors.transpose();
    let cov = (&cov + cov.transpose()) * 0.5;
    let local = Gaussian::new(z_star, cov)?;
    let prior = Gaussian::new(DVector::zeros(k), DMatrix::identity(k, k) * 0.5)?;

    let mut rng = rng_from_seed(seed);
    let mut z = DMatrix::zeros(n_mc, k);
    let mut log_q = Vec::with_capacity(n_mc);
    for i in 0..n_mc {
        let zi = if rng.random::<f64>() < DEFENSIVE_WEIGHT {
            prior.sample(&mut rng)
        } else {
            local.sample(&mut rng)
        };
        log_q.push(logsumexp(&[
            (1.0 - DEFENSIVE_WEIGHT).ln() + local.log_pdf(&zi),
            DEFENSIVE_WEIGHT.ln() + prior.log_pdf(&zi),
        ]));
        z.set_row(i, &zi.transpose());
    }
    let f = objective_rows(spec, &x, beta, &z)?;
    let log_w: Vec<f64> = (0..n_mc)
        .map(|i| {
            if z.row(i).norm() <= query.z_radius {
                f[i] - log_q[i]
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let top = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return Err(Error::NonFinite("every importance weight vanished".into()));
    }
    let w: Vec<f64> = log_w.iter().map(|l| (l - top).exp()).collect();
    let n = n_mc as f64;
    let sum: f64 = w.iter().sum();
    let sum_sq: f64 = w.iter().map(|v| v * v).sum();
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0);
    let ess = sum * sum / sum_sq;
    Ok(McEstimate {
        value: top + mean.ln() + log_normalizer(k, spec.dim(), beta),
        stderr: (var / n).sqrt() / mean,
        ess,
        reliable: ess >= MIN_ESS,
    })
}
