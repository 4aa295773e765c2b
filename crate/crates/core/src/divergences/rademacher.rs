use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::ipm::{projected_ascent, AscentRule};
use super::kl::Estimate;
use crate::discriminators::Critic;
use crate::error::{Error, Result};
use crate::linalg::matrix_to_tensor;
use crate::{derive_seed, rng_from_seed, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RademacherConfig {
    pub draws: usize,
    pub restarts: usize,
    pub steps: usize,
    pub step_size: f64,
    pub rule: AscentRule,
    pub seed: u64,
}

impl Default for RademacherConfig {
    fn default() -> Self {
        Self {
            draws: 20,
            restarts: 3,
            steps: 300,
            step_size: 5e-2,
            rule: AscentRule::NormalizedGradient,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RademacherEstimate {
    pub value: f64,
    pub stderr: f64,
    /// Inner supremum for each sign draw.
    pub draws: Vec<f64>,
}

/// `|(1/n) Σ εᵢ f(xᵢ)|` for a fixed critic.
pub fn signed_average<C: Critic>(
    critic: &C,
    samples: &DMatrix<f64>,
    eps: &DVector<f64>,
) -> Result<f64> {
    let f = critic.evaluate(samples)?;
    Ok((f.dot(eps) / samples.nrows() as f64).abs())
}

/// Empirical Rademacher complexity `E_ε sup_f |(1/n) Σ εᵢ f(xᵢ)|` of `family`
/// on fixed `samples`, averaged over `config.draws` sign vectors.
pub fn rademacher_estimate<C: Critic>(
    family: &C,
    samples: &DMatrix<f64>,
    config: &RademacherConfig,
) -> Result<RademacherEstimate> {
    if config.draws < 2 || config.restarts == 0 {
        return Err(Error::InvalidSpec(format!(
            "rademacher estimate needs at least 2 draws and 1 restart (got {} and {})",
            config.draws, config.restarts
        )));
    }
    let n = samples.nrows();
    let x = matrix_to_tensor(samples);
    let signs: &[f64] = if family.closed_under_negation() {
        &[1.0]
    } else {
        &[1.0, -1.0]
    };
    let mut draws = Vec::with_capacity(config.draws);
    for draw in 0..config.draws {
        let draw_seed = derive_seed(config.seed, draw as u64);
        let eps = rademacher_signs(n, config.seed, draw);
        let eps_t = Tensor::column(eps.as_slice());
        let mut sup = 0.0f64;
        for restart in 0..config.restarts {
            let restart_seed = derive_seed(draw_seed, 1 + restart as u64);
            let init = family.randomize(&mut rng_from_seed(restart_seed));
            for (k, &sign) in signs.iter().enumerate() {
                let mut critic = init.clone();
                let mut rng = rng_from_seed(derive_seed(restart_seed, 1 + k as u64));
                let context = format!("rademacher draw {draw}, restart {restart}");
                projected_ascent(
                    &mut critic,
                    config.steps,
                    config.step_size,
                    config.rule,
                    true,
                    &context,
                    &mut rng,
                    |c, tape, vars, _| {
                        let xv = tape.constant(x.clone())?;
                        let e = tape.constant(eps_t.clone())?;
                        let f = c.build(tape, vars, xv)?;
                        let s = tape.mul(f, e)?;
                        let s = tape.mean(s)?;
                        tape.scale(s, sign)
                    },
                )?;
                sup = sup.max(signed_average(&critic, samples, &eps)?);
            }
        }
        draws.push(sup);
    }
    let est = Estimate::from_samples(&draws);
    Ok(RademacherEstimate {
        value: est.value,
        stderr: est.stderr,
        draws,
    })
}

/// The sign vector used for draw `draw` under `seed`, matching
/// [`rademacher_estimate`].
pub fn rademacher_signs(n: usize, seed: u64, draw: usize) -> DVector<f64> {
    // Unit 0 of the draw stream; restarts take units 1 and up.
    let mut rng = rng_from_seed(derive_seed(derive_seed(seed, draw as u64), 0));
    DVector::from_fn(n, |_, _| if rng.random::<bool>() { 1.0 } else { -1.0 })
}
