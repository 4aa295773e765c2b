use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use ralab::diffgraph::{GraphError, Var};
use ralab::discriminators::{Critic, LinearCritic, MlpCritic, ReluCritic};
use ralab::divergences::{ipm_estimate, IpmConfig, Regularization};
use ralab::generators::{Activation, GaussianSpec, InvertibleGeneratorSpec, Layer, Sampler};
use ralab::training::*;
use ralab::{rng_from_seed, Error, Rng, Tape, Tensor};

fn short_config(steps: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        total_gen_steps: steps,
        eval_every: 50,
        seed,
        ..TrainConfig::default()
    }
}

#[test]
fn gradient_penalty_matches_finite_differences() {
    let mut rng = rng_from_seed(1);
    let critic = MlpCritic::new(&[2, 5, 1], None, &mut rng).unwrap();
    let p = GaussianSpec::standard(2).sample(16, 2);
    let q = GaussianSpec::standard(2).sample(16, 3) * 2.0;

    let mut tape = Tape::new();
    let params = critic.params();
    let vars: Vec<Var> = params.iter().map(|t| tape.var(t.clone()).unwrap()).collect();
    let gp = gradient_penalty_on_tape(&critic, &mut tape, &vars, &p, &q, &mut rng_from_seed(4)).unwrap();
    let grads = tape.gradient_values(gp, &vars).unwrap();

    let h = 1e-6;
    for (i, t) in params.iter().enumerate() {
        for j in 0..t.len() {
            let at = |delta: f64| {
                let mut ps = params.clone();
                ps[i].data_mut()[j] += delta;
                let mut c = critic.clone();
                c.set_params(&ps).unwrap();
                gradient_penalty(&c, &p, &q, 4).unwrap()
            };
            let fd = (at(h) - at(-h)) / (2.0 * h);
            let g = grads[i].data()[j];
            assert!((g - fd).abs() <= 1e-4 * fd.abs().max(1e-3), "param {i}[{j}]: {g} vs {fd}");
        }
    }
}

fn invertible(d: usize, seed: u64) -> InvertibleGeneratorSpec {
    InvertibleGeneratorSpec::random(d, 2, (0.5, 2.0), 0.3, Activation::leaky(0.5), &mut rng_from_seed(seed))
}

#[test]
fn equal_start_stays_at_zero_ipm() {
    let g = invertible(2, 5);
    let family = ReluCritic::family(2, 3.0);
    let eval = IpmConfig {
        restarts: 3,
        steps: 200,
        step_size: 1e-2,
        ..IpmConfig::default()
    };
    let mut seen = Vec::new();
    let target = g.clone();
    wgan_train(g, &family, &target, &short_config(200, 6), |step, gen| {
        let cfg = IpmConfig {
            seed: step as u64,
            ..eval.clone()
        };
        let est = ipm_estimate(&family, &target, gen, &cfg)?;
        seen.push((est.value, est.stderr));
        Ok(Metrics {
            ipm_eval: Some(est.value),
            kl: None,
        })
    })
    .unwrap();
    assert_eq!(seen.len(), 5);
    for (v, s) in seen {
        assert!(v.abs() <= 3.0 * s, "ipm {v} stderr {s}");
    }
}

#[test]
fn learns_a_one_dimensional_mean() {
    let g = InvertibleGeneratorSpec::new(
        vec![Layer::new(DMatrix::from_element(1, 1, 1.0), DVector::zeros(1))],
        DVector::from_element(1, 1.0),
        Activation::Identity,
        Default::default(),
    )
    .unwrap();
    let target = GaussianSpec::new(DVector::from_element(1, 0.8), DMatrix::identity(1, 1)).unwrap();
    let config = TrainConfig {
        optimizer: RmsPropConfig::with_lr(1e-3),
        total_gen_steps: 2000,
        eval_every: 500,
        seed: 7,
        ..TrainConfig::default()
    };
    let out = wgan_train(g, &LinearCritic::family(1), &target, &config, |_, _| Ok(Metrics::default())).unwrap();
    let learned = out.generator.layers[0].bias[0];
    assert!((learned - 0.8).abs() < 0.1, "learned mean {learned}");
    assert_eq!(out.trace.rows.len(), 2001);
    assert_eq!(out.trace.checkpoints().count(), 0);
}

/// MLP critic that checks its own clip constraint whenever it is built.
#[derive(Clone)]
struct Audited {
    inner: MlpCritic,
    builds: Arc<AtomicUsize>,
}

impl Critic for Audited {
    fn params(&self) -> Vec<Tensor> {
        self.inner.params()
    }
    fn set_params(&mut self, params: &[Tensor]) -> ralab::Result<()> {
        self.inner.set_params(params)
    }
    fn build(&self, tape: &mut Tape, params: &[Var], x: Var) -> Result<Var, GraphError> {
        let clip = self.inner.clip.unwrap();
        assert!(self.params().iter().all(|t| t.max_abs() <= clip), "critic left the clip box");
        self.builds.fetch_add(1, Ordering::Relaxed);
        self.inner.build(tape, params, x)
    }
    fn project(&mut self) {
        self.inner.project()
    }
    fn randomize(&self, rng: &mut Rng) -> Self {
        Self {
            inner: self.inner.randomize(rng),
            builds: self.builds.clone(),
        }
    }
}

#[test]
fn clipped_critic_stays_feasible_after_every_step() {
    let builds = Arc::new(AtomicUsize::new(0));
    let family = Audited {
        inner: MlpCritic::new(&[2, 8, 1], Some(0.05), &mut rng_from_seed(8)).unwrap(),
        builds: builds.clone(),
    };
    let config = TrainConfig {
        optimizer: RmsPropConfig::with_lr(1e-2),
        ..short_config(30, 9)
    };
    wgan_train(invertible(2, 10), &family, &invertible(2, 11), &config, |_, _| Ok(Metrics::default())).unwrap();
    // Ten critic steps per row (each builds twice) and one generator step per
    // update.
    assert_eq!(builds.load(Ordering::Relaxed), 31 * 10 * 2 + 30);
}

#[test]
fn training_is_deterministic() {
    let run = || {
        let family = MlpCritic::new(&[2, 8, 1], Some(0.1), &mut rng_from_seed(0)).unwrap();
        let config = TrainConfig {
            regularization: Regularization::GradientPenalty {
                coefficient: DEFAULT_GP_COEFFICIENT,
            },
            ..short_config(60, 12)
        };
        let target = invertible(2, 13);
        let out = wgan_train(invertible(2, 14), &family, &target, &config, |step, g| {
            Ok(Metrics {
                ipm_eval: None,
                kl: Some(kl_to_target(&target, g, 2000, step as u64)?),
            })
        })
        .unwrap();
        let mut rows = out.trace.rows;
        rows.iter_mut().for_each(|r| r.wall_ms = 0);
        (rows, out.generator)
    };
    let (a, ga) = run();
    let (b, gb) = run();
    assert_eq!(a, b);
    assert_eq!(ga, gb);
    assert!(a.iter().all(|r| r.ipm_train.is_finite()));
    assert_eq!(a.iter().filter(|r| r.kl.is_some()).count(), 3);
}

/// Standard normal samples that turn into NaN after `after` draws.
struct Poisoned {
    calls: AtomicUsize,
    after: usize,
}

impl Sampler for Poisoned {
    fn dim(&self) -> usize {
        2
    }
    fn sample_with(&self, n: usize, rng: &mut Rng) -> DMatrix<f64> {
        let x = GaussianSpec::standard(2).sample_with(n, rng);
        if self.calls.fetch_add(1, Ordering::Relaxed) >= self.after {
            x.map(|_| f64::NAN)
        } else {
            x
        }
    }
}

#[test]
fn non_finite_loss_aborts_with_partial_trace() {
    let target = Poisoned {
        calls: AtomicUsize::new(0),
        after: 55,
    };
    let family = ReluCritic::family(2, 3.0);
    let failure = wgan_train(invertible(2, 15), &family, &target, &short_config(100, 16), |_, _| Ok(Metrics::default()))
        .unwrap_err();
    assert!(matches!(failure.error, Error::NonFinite(_)), "{:?}", failure.error);
    assert_eq!(failure.error.exit_code(), 3);
    assert_eq!(failure.trace.rows.len(), 5);
    let csv = failure.trace.to_csv_string().unwrap();
    assert!(!csv.contains("NaN"));
}

#[test]
fn invalid_configs_are_rejected() {
    let family = ReluCritic::family(2, 3.0);
    let bad = TrainConfig {
        batch: 1,
        ..TrainConfig::default()
    };
    let err = wgan_train(invertible(2, 1), &family, &invertible(2, 2), &bad, |_, _| Ok(Metrics::default()));
    assert!(matches!(err.unwrap_err().error, Error::InvalidSpec(_)));
    let err = wgan_train(invertible(3, 1), &family, &invertible(2, 2), &TrainConfig::default(), |_, _| {
        Ok(Metrics::default())
    });
    assert!(err.is_err());
}

#[test]
fn mlp_generator_trains_against_mlp_critic() {
    let mut rng = rng_from_seed(17);
    let g = MlpGenerator::new(&[2, 50, 50, 2], &mut rng).unwrap();
    let family = MlpCritic::new(&[2, 50, 50, 1], Some(0.1), &mut rng).unwrap();
    let target = GaussianSpec::standard(2);
    let out = wgan_train(g, &family, &target, &short_config(20, 18), |_, _| Ok(Metrics::default())).unwrap();
    assert_eq!(out.trace.rows.len(), 21);
}
