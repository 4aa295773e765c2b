use serde::{Deserialize, Serialize};

use super::closed::w2_gaussian;
use crate::error::Result;
use crate::generators::GaussianSpec;

/// Spectral bounds of the Gaussian class: `σ_min² ≤ λ(Σ) ≤ σ_max²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianClass {
    pub sigma_min: f64,
    pub sigma_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    pub ipm: f64,
    pub stderr: f64,
    pub w2: f64,
    /// `σ_min/(2√(2πd)·σ_max) · W₂`.
    pub lower_bound: f64,
    /// Upper surrogate for `W₁`; the closed-form `W₂ ≥ W₁`.
    pub upper_bound: f64,
    pub w1_empirical: Option<f64>,
    pub lower_holds: bool,
    pub upper_holds: bool,
    /// `ipm + 3·stderr - lower_bound`; negative when the lower bound fails.
    pub lower_margin: f64,
    /// `upper_bound + 3·stderr - ipm`; negative when the upper bound fails.
    pub upper_margin: f64,
    /// Whether `ipm ≤ w1_empirical + 3·stderr`, when an empirical W₁ is given.
    pub below_empirical_w1: Option<bool>,
}

/// Checks a ReLU-family IPM estimate between two Gaussians against the
/// two-sided bound in terms of `W₂`, allowing three standard errors of slack.
pub fn check_sandwich_gaussian(
    g1: &GaussianSpec,
    g2: &GaussianSpec,
    ipm: f64,
    stderr: f64,
    class: GaussianClass,
    w1_empirical: Option<f64>,
) -> Result<SandwichReport> {
    let w2 = w2_gaussian(g1, g2)?;
    let d = g1.dim() as f64;
    let kappa = class.sigma_min / (2.0 * (2.0 * std::f64::consts::PI * d).sqrt() * class.sigma_max);
    let lower_bound = kappa * w2;
    let slack = 3.0 * stderr;
    // Covers rounding when both sides are zero.
    let tol = 1e-12;
    let lower_margin = ipm + slack - lower_bound;
    let upper_margin = w2 + slack - ipm;
    Ok(SandwichReport {
        ipm,
        stderr,
        w2,
        lower_bound,
        upper_bound: w2,
        w1_empirical,
        lower_holds: lower_margin >= -tol,
        upper_holds: upper_margin >= -tol,
        lower_margin,
        upper_margin,
        below_empirical_w1: w1_empirical.map(|w| ipm <= w + slack + tol),
    })
}

/// Whether `w² ≤ 2σ²·kl_sym` up to a relative tolerance of `1e-10`.
pub fn check_transport_inequality(kl_sym: f64, w_value: f64, sigma2: f64) -> bool {
    assert!(sigma2 > 0.0, "sub-Gaussian variance proxy must be positive");
    let rhs = 2.0 * sigma2 * kl_sym;
    w_value * w_value <= rhs + 1e-10 * rhs.abs().max(1.0)
}
