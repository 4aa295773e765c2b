//! Distances between distributions: the neural-net IPM under any
//! [`Critic`](crate::discriminators::Critic) family, exact empirical
//! Wasserstein-1, Gaussian and exponential-family closed forms, empirical
//! KL, empirical Rademacher complexity, and checkers for the inequalities
//! relating them.

mod checks;
mod closed;
mod ipm;
mod kl;
mod rademacher;
mod w1;

pub use checks::{
    check_sandwich_gaussian, check_transport_inequality, GaussianClass, SandwichReport,
};
pub use closed::{expfamily_ipm_closed, kl_expfamily, kl_gaussian, w2_gaussian};
pub use ipm::{
    contrast_with_stderr, ipm_estimate, AscentRule, IpmConfig, IpmEstimate, Regularization,
};
pub use kl::{kl_empirical, symmetric_kl, Estimate};
pub use rademacher::{
    rademacher_estimate, rademacher_signs, signed_average, RademacherConfig, RademacherEstimate,
};
pub use w1::{solve_assignment, w1_assignment, w1_exact, w1_subbatched, MAX_W1_BATCH};

pub(crate) use ipm::contrast_on_tape;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub batch: usize,
    pub eval_batch: usize,
    pub w1_batch: usize,
    pub restarts: usize,
    pub steps: usize,
    pub seed: u64,
}

/// Every distance computed for one pair of distributions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergenceReport {
    pub ipm: Estimate,
    pub w1_exact: f64,
    pub w2_closed: Option<f64>,
    pub kl_forward: Option<f64>,
    pub kl_backward: Option<f64>,
    pub rademacher: Option<Estimate>,
    pub metadata: ReportMetadata,
}

impl DivergenceReport {
    /// Rejects non-finite entries and distances below `-tolerance`. The IPM
    /// and KL estimates are allowed three standard errors below zero.
    pub fn validate(&self, tolerance: f64) -> Result<()> {
        let mut checks = vec![
            ("ipm", self.ipm.value + 3.0 * self.ipm.stderr),
            ("w1_exact", self.w1_exact),
        ];
        checks.extend(self.w2_closed.map(|v| ("w2_closed", v)));
        checks.extend(self.kl_forward.map(|v| ("kl_forward", v)));
        checks.extend(self.kl_backward.map(|v| ("kl_backward", v)));
        checks.extend(self.rademacher.map(|r| ("rademacher", r.value)));
        for (name, v) in checks {
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("{name} = {v}")));
            }
            if v < -tolerance {
                return Err(Error::InvalidSpec(format!("{name} = {v} is negative")));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
