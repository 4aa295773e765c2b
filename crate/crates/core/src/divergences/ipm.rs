use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::diffgraph::{GraphError, Var};
use crate::discriminators::Critic;
use crate::error::{Error, Result};
use crate::generators::Sampler;
use crate::linalg::matrix_to_tensor;
use crate::training::{gradient_penalty_on_tape, RmsProp, RmsPropConfig};
use crate::{derive_seed, rng_from_seed, Rng, Tape};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Regularization {
    /// Project onto the family's own constraint set after every step
    /// (weight clipping for MLP critics).
    Projection,
    /// Subtract `coefficient · GP` from the objective; no projection.
    GradientPenalty { coefficient: f64 },
}

/// Update rule for the inner maximization.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AscentRule {
    /// Per-coordinate RMSProp with learning rate `step_size`.
    #[default]
    RmsProp,
    /// `θ += η_t·g/‖g‖` with the norm over all parameters and `η_t` decaying
    /// linearly from `step_size` to zero. Unlike per-coordinate scaling, its
    /// fixed points under projection are the constrained maximizers.
    NormalizedGradient,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IpmConfig {
    pub restarts: usize,
    pub steps: usize,
    pub step_size: f64,
    pub rule: AscentRule,
    pub regularization: Regularization,
    pub batch: usize,
    pub eval_batch: usize,
    pub seed: u64,
}

impl Default for IpmConfig {
    fn default() -> Self {
        Self {
            restarts: 5,
            steps: 500,
            step_size: 1e-3,
            rule: AscentRule::RmsProp,
            regularization: Regularization::Projection,
            batch: 256,
            eval_batch: 4096,
            seed: 0,
        }
    }
}

impl IpmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 || self.steps == 0 || self.batch == 0 || self.eval_batch < 2 {
            return Err(Error::InvalidSpec(format!(
                "ipm config needs restarts, steps, batch ≥ 1 and eval batch ≥ 2 (got {self:?})"
            )));
        }
        if !(self.step_size > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "step size {} must be positive",
                self.step_size
            )));
        }
        Ok(())
    }
}

/// Result of [`ipm_estimate`]. The witness is `sign·critic`.
#[derive(Clone, Debug)]
pub struct IpmEstimate<C> {
    pub value: f64,
    pub stderr: f64,
    pub critic: C,
    pub sign: f64,
    pub restart: usize,
}

/// Runs projected ascent on `objective`, rebuilt on a fresh tape each step.
/// `context` labels the run in non-finite diagnostics.
#[allow(clippy::too_many_arguments)]
pub(crate) fn projected_ascent<C, F>(
    critic: &mut C,
    steps: usize,
    step_size: f64,
    rule: AscentRule,
    project: bool,
    context: &str,
    rng: &mut Rng,
    mut objective: F,
) -> Result<()>
where
    C: Critic,
    F: FnMut(&C, &mut Tape, &[Var], &mut Rng) -> Result<Var, GraphError>,
{
    let mut opt = RmsProp::new(RmsPropConfig::with_lr(step_size));
    let non_finite =
        |step: usize, what: String| Error::NonFinite(format!("{context}, step {step}: {what}"));
    for step in 0..steps {
        let mut tape = Tape::new();
        let mut params = critic.params();
        let vars = params
            .iter()
            .map(|p| tape.var(p.clone()))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| non_finite(step, e.to_string()))?;
        let obj = objective(critic, &mut tape, &vars, rng).map_err(|e| match e {
            GraphError::NonFinite { .. } => non_finite(step, e.to_string()),
            other => other.into(),
        })?;
        let value = tape.value(obj).data()[0];
        if !value.is_finite() {
            return Err(non_finite(step, format!("objective {value}")));
        }
        let grads = tape
            .gradient_values(obj, &vars)
            .map_err(|e| non_finite(step, e.to_string()))?;
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(non_finite(step, "gradient".into()));
        }
        match rule {
            AscentRule::RmsProp => opt.ascend(&mut params, &grads),
            AscentRule::NormalizedGradient => {
                let norm = grads
                    .iter()
                    .flat_map(|g| g.data())
                    .map(|v| v * v)
                    .sum::<f64>()
                    .sqrt();
                if norm > 0.0 {
                    let eta = step_size * (1.0 - step as f64 / steps as f64) / norm;
                    for (p, g) in params.iter_mut().zip(&grads) {
                        for (a, b) in p.data_mut().iter_mut().zip(g.data()) {
                            *a += eta * b;
                        }
                    }
                }
            }
        }
        critic.set_params(&params)?;
        if project {
            critic.project();
        }
    }
    Ok(())
}

/// `s·(mean f(x_p) - mean f(x_q))` on the tape.
pub(crate) fn contrast_on_tape<C: Critic>(
    critic: &C,
    tape: &mut Tape,
    params: &[Var],
    xp: &DMatrix<f64>,
    xq: &DMatrix<f64>,
    sign: f64,
) -> Result<Var, GraphError> {
    let a = tape.constant(matrix_to_tensor(xp))?;
    let b = tape.constant(matrix_to_tensor(xq))?;
    let fa = critic.build(tape, params, a)?;
    let fa = tape.mean(fa)?;
    let fb = critic.build(tape, params, b)?;
    let fb = tape.mean(fb)?;
    let c = tape.sub(fa, fb)?;
    tape.scale(c, sign)
}

/// Contrast `sign·(mean f(x_p) - mean f(x_q))` with its standard error.
pub fn contrast_with_stderr<C: Critic>(
    critic: &C,
    xp: &DMatrix<f64>,
    xq: &DMatrix<f64>,
    sign: f64,
) -> Result<(f64, f64)> {
    let fp = critic.evaluate(xp)?;
    let fq = critic.evaluate(xq)?;
    let moments = |f: &nalgebra::DVector<f64>| {
        let n = f.len() as f64;
        let m = f.mean();
        let var = f.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        (m, var / n)
    };
    let (mp, vp) = moments(&fp);
    let (mq, vq) = moments(&fq);
    let value = sign * (mp - mq);
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("held-out contrast {value}")));
    }
    Ok((value, (vp + vq).sqrt()))
}

const SELECTION_STREAM: u64 = u64::MAX;
const EVALUATION_STREAM: u64 = u64::MAX - 1;

/// Neural-net IPM `sup_f E_p f - E_q f` over `family`, maximized by projected
/// ascent from `config.restarts` random initializations. Families not
/// closed under negation are optimized for both signs.
///
/// Candidates are ranked on a held-out selection batch and the winner's
/// contrast is reported on a second held-out batch, so the maximum over
/// restarts carries no selection bias.
pub fn ipm_estimate<C, P, Q>(family: &C, p: &P, q: &Q, config: &IpmConfig) -> Result<IpmEstimate<C>>
where
    C: Critic,
    P: Sampler + ?Sized,
    Q: Sampler + ?Sized,
{
    config.validate()?;
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            found: q.dim(),
        });
    }
    let held_out = |stream: u64| {
        let s = derive_seed(config.seed, stream);
        (
            p.sample(config.eval_batch, derive_seed(s, 0)),
            q.sample(config.eval_batch, derive_seed(s, 1)),
        )
    };
    let (sel_p, sel_q) = held_out(SELECTION_STREAM);
    let signs: &[f64] = if family.closed_under_negation() {
        &[1.0]
    } else {
        &[1.0, -1.0]
    };
    let project = matches!(config.regularization, Regularization::Projection);

    let mut best: Option<(f64, C, f64, usize)> = None;
    for restart in 0..config.restarts {
        let restart_seed = derive_seed(config.seed, restart as u64);
        let init = family.randomize(&mut rng_from_seed(derive_seed(restart_seed, 0)));
        for (k, &sign) in signs.iter().enumerate() {
            let mut critic = init.clone();
            let mut rng = rng_from_seed(derive_seed(restart_seed, 1 + k as u64));
            let context = format!("ipm restart {restart}, sign {sign}");
            projected_ascent(
                &mut critic,
                config.steps,
                config.step_size,
                config.rule,
                project,
                &context,
                &mut rng,
                |c, tape, vars, rng| {
                    let xp = p.sample_with(config.batch, rng);
                    let xq = q.sample_with(config.batch, rng);
                    let obj = contrast_on_tape(c, tape, vars, &xp, &xq, sign)?;
                    match config.regularization {
                        Regularization::Projection => Ok(obj),
                        Regularization::GradientPenalty { coefficient } => {
                            let gp = gradient_penalty_on_tape(c, tape, vars, &xp, &xq, rng)?;
                            let gp = tape.scale(gp, -coefficient)?;
                            tape.add(obj, gp)
                        }
                    }
                },
            )?;
            let (score, _) = contrast_with_stderr(&critic, &sel_p, &sel_q, sign)?;
            if best.as_ref().is_none_or(|b| score > b.0) {
                best = Some((score, critic, sign, restart));
            }
        }
    }
    let (_, critic, sign, restart) = best.expect("at least one restart");
    let (eval_p, eval_q) = held_out(EVALUATION_STREAM);
    let (value, stderr) = contrast_with_stderr(&critic, &eval_p, &eval_q, sign)?;
    Ok(IpmEstimate {
        value,
        stderr,
        critic,
        sign,
        restart,
    })
}
