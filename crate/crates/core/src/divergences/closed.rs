use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::generators::{ExpFamily, GaussianSpec};
use crate::linalg::sym_sqrt;

fn same_dim(a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            expected: a,
            found: b,
        })
    }
}

/// `W₂(N(μ₁,Σ₁), N(μ₂,Σ₂))` in closed form.
pub fn w2_gaussian(g1: &GaussianSpec, g2: &GaussianSpec) -> Result<f64> {
    same_dim(g1.dim(), g2.dim())?;
    let s1 = sym_sqrt(g1.covariance());
    let cross = sym_sqrt(&(&s1 * g2.covariance() * &s1));
    let sq =
        (g1.mean() - g2.mean()).norm_squared() + g1.covariance().trace() + g2.covariance().trace()
            - 2.0 * cross.trace();
    Ok(sq.max(0.0).sqrt())
}

/// `KL(N(μ₁,Σ₁) ‖ N(μ₂,Σ₂))`.
pub fn kl_gaussian(g1: &GaussianSpec, g2: &GaussianSpec) -> Result<f64> {
    same_dim(g1.dim(), g2.dim())?;
    let chol = g2
        .covariance()
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite("second covariance"))?;
    let d = g1.dim() as f64;
    let trace = chol.solve(g1.covariance()).trace();
    let delta = g2.mean() - g1.mean();
    let quad = delta.dot(&chol.solve(&delta));
    Ok(0.5 * (trace + quad - d + g2.log_det_covariance() - g1.log_det_covariance()))
}

/// Bregman divergence of the log-partition,
/// `A(θ₂) - A(θ₁) - ⟨∇A(θ₁), θ₂ - θ₁⟩ = KL(p_θ₁ ‖ p_θ₂)`.
pub fn kl_expfamily(
    theta1: &DVector<f64>,
    theta2: &DVector<f64>,
    family: ExpFamily,
) -> Result<f64> {
    same_dim(theta1.len(), theta2.len())?;
    let grad = family.log_partition_grad(theta1);
    Ok(family.log_partition(theta2) - family.log_partition(theta1) - grad.dot(&(theta2 - theta1)))
}

/// IPM under unit-norm linear statistics of the sufficient statistic,
/// `‖∇A(θ₁) - ∇A(θ₂)‖`.
pub fn expfamily_ipm_closed(
    theta1: &DVector<f64>,
    theta2: &DVector<f64>,
    family: ExpFamily,
) -> Result<f64> {
    same_dim(theta1.len(), theta2.len())?;
    Ok((family.log_partition_grad(theta1) - family.log_partition_grad(theta2)).norm())
}
