use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generators::LogDensity;

/// A Monte Carlo mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    /// Mean and standard error of the mean of `xs`.
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        if xs.is_empty() {
            return Self {
                value: 0.0,
                stderr: 0.0,
            };
        }
        let mean = xs.iter().sum::<f64>() / n;
        let var = if xs.len() > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self {
            value: mean,
            stderr: (var / n).sqrt(),
        }
    }
}

/// `mean(log p(x) - log q(x))` over samples `x ~ p`.
pub fn kl_empirical(
    logp: &impl LogDensity,
    logq: &impl LogDensity,
    samples: &DMatrix<f64>,
) -> Result<Estimate> {
    let lp = logp.log_density_rows(samples)?;
    let lq = logq.log_density_rows(samples)?;
    let mut diffs = Vec::with_capacity(samples.nrows());
    for i in 0..samples.nrows() {
        if !lp[i].is_finite() || !lq[i].is_finite() {
            return Err(Error::NonFinite(format!(
                "log density at sample {i} (log p = {}, log q = {})",
                lp[i], lq[i]
            )));
        }
        diffs.push(lp[i] - lq[i]);
    }
    Ok(Estimate::from_samples(&diffs))
}

/// Average of the two directions, `(KL(p‖q) + KL(q‖p))/2`.
pub fn symmetric_kl(kl_pq: f64, kl_qp: f64) -> f64 {
    0.5 * (kl_pq + kl_qp)
}
