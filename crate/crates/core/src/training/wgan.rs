use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::generator::Generator;
use super::optim::{RmsProp, RmsPropConfig};
use super::penalty::gradient_penalty_on_tape;
use super::trace::{TrainRow, TrainTrace};
use crate::diffgraph::{GraphError, Var};
use crate::discriminators::Critic;
use crate::divergences::{contrast_on_tape, ipm_estimate, kl_empirical, IpmConfig, Regularization};
use crate::error::{Error, Result};
use crate::generators::{LogDensity, Sampler};
use crate::linalg::matrix_to_tensor;
use crate::{derive_seed, rng_from_seed, Tape, Tensor};

pub const DEFAULT_GP_COEFFICIENT: f64 = 10.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch: usize,
    pub critic_steps: usize,
    /// Shared by the critic and the generator.
    pub optimizer: RmsPropConfig,
    pub regularization: Regularization,
    pub total_gen_steps: usize,
    pub eval_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch: 64,
            critic_steps: 10,
            optimizer: RmsPropConfig::default(),
            regularization: Regularization::Projection,
            total_gen_steps: 2000,
            eval_every: 100,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch < 2 || self.critic_steps == 0 || self.eval_every == 0 {
            return Err(Error::InvalidSpec(format!(
                "training needs batch ≥ 2, critic steps ≥ 1 and eval_every ≥ 1 (got {self:?})"
            )));
        }
        if !(self.optimizer.lr > 0.0) {
            return Err(Error::InvalidSpec(format!("learning rate {}", self.optimizer.lr)));
        }
        Ok(())
    }
}

/// Evaluation metrics returned by a hook at a checkpoint.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Metrics {
    pub ipm_eval: Option<f64>,
    pub kl: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct Trained<G, C> {
    pub generator: G,
    pub critic: C,
    pub trace: TrainTrace,
}

/// A run that stopped early; `trace` holds every row written before the
/// failure.
#[derive(Debug)]
pub struct TrainFailure {
    pub trace: TrainTrace,
    pub error: Error,
}

impl From<Box<TrainFailure>> for Error {
    fn from(f: Box<TrainFailure>) -> Self {
        f.error
    }
}

const CRITIC_INIT_STREAM: u64 = 0;
const BATCH_STREAM: u64 = 1;

/// Alternating WGAN training: `critic_steps` ascent steps on
/// `mean f(x_p) - mean f(G(z))` (projected, or with a gradient penalty),
/// then one descent step of the generator on `-mean f(G(z))` with a fresh
/// latent batch.
///
/// Row `s` describes the generator after `s` updates. `hooks` runs at every
/// multiple of `eval_every` and at the final step.
pub fn wgan_train<G, C, P, H>(
    generator: G,
    family: &C,
    target: &P,
    config: &TrainConfig,
    mut hooks: H,
) -> std::result::Result<Trained<G, C>, Box<TrainFailure>>
where
    G: Generator,
    C: Critic,
    P: Sampler + ?Sized,
    H: FnMut(usize, &G) -> Result<Metrics>,
{
    let mut trace = TrainTrace::default();
    let fail = |trace: &TrainTrace, error: Error| {
        Box::new(TrainFailure {
            trace: trace.clone(),
            error,
        })
    };
    if let Err(e) = config.validate() {
        return Err(fail(&trace, e));
    }
    if generator.dim() != target.dim() {
        let e = Error::DimensionMismatch {
            expected: target.dim(),
            found: generator.dim(),
        };
        return Err(fail(&trace, e));
    }
    let project = matches!(config.regularization, Regularization::Projection);
    let mut generator = generator;
    let mut critic = family.randomize(&mut rng_from_seed(derive_seed(config.seed, CRITIC_INIT_STREAM)));
    if project {
        critic.project();
    }
    let mut rng = rng_from_seed(derive_seed(config.seed, BATCH_STREAM));
    let mut critic_opt = RmsProp::new(config.optimizer);
    let mut gen_opt = RmsProp::new(config.optimizer);
    let start = Instant::now();

    for step in 0..=config.total_gen_steps {
        let mut ipm_train = 0.0;
        for k in 0..config.critic_steps {
            let context = format!("critic step {step}.{k}");
            let xp = target.sample_with(config.batch, &mut rng);
            let xq = generator.sample_with(config.batch, &mut rng);
            let mut tape = Tape::new();
            let mut params = critic.params();
            let run = (|| -> std::result::Result<(f64, Vec<Tensor>), GraphError> {
                let vars = variables(&mut tape, &params)?;
                let contrast = contrast_on_tape(&critic, &mut tape, &vars, &xp, &xq, 1.0)?;
                let obj = match config.regularization {
                    Regularization::Projection => contrast,
                    Regularization::GradientPenalty { coefficient } => {
                        let gp = gradient_penalty_on_tape(&critic, &mut tape, &vars, &xp, &xq, &mut rng)?;
                        let gp = tape.scale(gp, -coefficient)?;
                        tape.add(contrast, gp)?
                    }
                };
                let value = tape.value(contrast).data()[0];
                let grads = tape.gradient_values(obj, &vars)?;
                Ok((value, grads))
            })();
            let (value, grads) = match checked(run, &context) {
                Ok(v) => v,
                Err(e) => return Err(fail(&trace, e)),
            };
            ipm_train = value;
            critic_opt.ascend(&mut params, &grads);
            if let Err(e) = critic.set_params(&params) {
                return Err(fail(&trace, e));
            }
            if project {
                critic.project();
            }
        }

        let row = if step % config.eval_every == 0 || step == config.total_gen_steps {
            match hooks(step, &generator) {
                Ok(m) => TrainRow {
                    step,
                    ipm_train,
                    ipm_eval: m.ipm_eval,
                    kl: m.kl,
                    wall_ms: start.elapsed().as_millis() as u64,
                },
                Err(e) => return Err(fail(&trace, e)),
            }
        } else {
            TrainRow {
                step,
                ipm_train,
                ipm_eval: None,
                kl: None,
                wall_ms: start.elapsed().as_millis() as u64,
            }
        };
        if let Err(e) = trace.push(row) {
            return Err(fail(&trace, e));
        }
        if step == config.total_gen_steps {
            break;
        }

        let z = generator.sample_latent(config.batch, &mut rng);
        let mut params = generator.params();
        let mut tape = Tape::new();
        let run = (|| -> std::result::Result<(f64, Vec<Tensor>), GraphError> {
            let vars = variables(&mut tape, &params)?;
            let zv = tape.constant(matrix_to_tensor(&z))?;
            let x = generator.build(&mut tape, &vars, zv)?;
            let cp = critic
                .params()
                .into_iter()
                .map(|p| tape.constant(p))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            let f = critic.build(&mut tape, &cp, x)?;
            let f = tape.mean(f)?;
            let loss = tape.scale(f, -1.0)?;
            let value = tape.value(loss).data()[0];
            Ok((value, tape.gradient_values(loss, &vars)?))
        })();
        let (_, grads) = match checked(run, &format!("generator step {step}")) {
            Ok(v) => v,
            Err(e) => return Err(fail(&trace, e)),
        };
        gen_opt.step(&mut params, &grads);
        if let Err(e) = generator.set_params(&params) {
            return Err(fail(&trace, e));
        }
        generator.project();
    }
    Ok(Trained {
        generator,
        critic,
        trace,
    })
}

fn variables(tape: &mut Tape, params: &[Tensor]) -> std::result::Result<Vec<Var>, GraphError> {
    params.iter().map(|p| tape.var(p.clone())).collect()
}

/// Maps graph failures and non-finite values or gradients to
/// [`Error::NonFinite`] tagged with `context`.
fn checked(
    run: std::result::Result<(f64, Vec<Tensor>), GraphError>,
    context: &str,
) -> Result<(f64, Vec<Tensor>)> {
    let (value, grads) = run.map_err(|e| match e {
        GraphError::NonFinite { .. } => Error::NonFinite(format!("{context}: {e}")),
        other => other.into(),
    })?;
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("{context}: loss {value}")));
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("{context}: gradient")));
    }
    Ok((value, grads))
}

/// IPM between `target` and `generator` from a freshly initialized critic,
/// with the stream for checkpoint `step` derived from `config.seed`.
pub fn cold_start_ipm<C, P, G>(family: &C, target: &P, generator: &G, config: &IpmConfig, step: usize) -> Result<f64>
where
    C: Critic,
    P: Sampler + ?Sized,
    G: Sampler + ?Sized,
{
    let cfg = IpmConfig {
        seed: derive_seed(config.seed, step as u64),
        ..config.clone()
    };
    Ok(ipm_estimate(family, target, generator, &cfg)?.value)
}

/// `KL(target ‖ generator)` from `n` target samples.
pub fn kl_to_target<P, G>(target: &P, generator: &G, n: usize, seed: u64) -> Result<f64>
where
    P: Sampler + LogDensity + ?Sized,
    G: LogDensity + ?Sized,
{
    let x = target.sample(n, seed);
    Ok(kl_empirical(&target, &generator, &x)?.value)
}
