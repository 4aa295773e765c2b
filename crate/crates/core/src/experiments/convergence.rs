use std::path::Path;

use serde::{Deserialize, Serialize};

use super::io::{svg_plot, Series};
use super::stats::{median, median_index, spearman};
use super::truth::make_ground_truth_generator;
use super::{CriticChoice, ExperimentConfig};
use crate::discriminators::{Critic, ContrastCritic, MlpCritic};
use crate::divergences::IpmConfig;
use crate::error::Result;
use crate::generators::InvertibleGeneratorSpec;
use crate::training::{cold_start_ipm, kl_to_target, wgan_train, Metrics, TrainConfig, TrainTrace};
use crate::{derive_seed, rng_from_seed};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub initial_kl: f64,
    pub final_kl: f64,
    /// Spearman correlation of KL and evaluation IPM over checkpoints.
    pub spearman: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub runs: Vec<RunSummary>,
    pub median_initial_kl: f64,
    pub median_final_kl: f64,
    /// Seed whose final KL is the median.
    pub median_seed: u64,
    pub spearman_median_seed: f64,
}

#[derive(Clone, Debug)]
pub struct TrainingReport {
    pub summary: TrainingSummary,
    pub traces: Vec<TrainTrace>,
}

const GROUND_TRUTH_UNIT: u64 = u64::MAX;
const INIT: u64 = 0;
const TRAIN: u64 = 1;
const EVAL_IPM: u64 = 2;
const EVAL_KL: u64 = 3;
const CRITIC: u64 = 4;

pub fn ground_truth(config: &ExperimentConfig) -> Result<InvertibleGeneratorSpec> {
    let s = &config.invertible;
    make_ground_truth_generator(s.dim, s.layers, derive_seed(config.seed, GROUND_TRUTH_UNIT))
}

/// One training run against the shared ground truth. `out` receives
/// `trace_seed{seed}.csv`, also when the run aborts.
pub fn run_training_seed(config: &ExperimentConfig, seed: u64, out: Option<&Path>) -> Result<TrainTrace> {
    let s = &config.invertible;
    let target = ground_truth(config)?;
    let run = derive_seed(config.seed, seed);
    let init = make_ground_truth_generator(s.dim, s.layers, derive_seed(run, INIT))?;
    let train = TrainConfig {
        seed: derive_seed(run, TRAIN),
        ..config.train.clone()
    };
    let eval = IpmConfig {
        seed: derive_seed(run, EVAL_IPM),
        ..config.ipm.clone()
    };
    let kl_seed = derive_seed(run, EVAL_KL);
    let result = match &s.critic {
        CriticChoice::Conjoined => {
            let family = ContrastCritic::from_generators(&init, &init)?;
            train_with(init, &family, &target, &train, &eval, s.kl_samples, kl_seed)
        }
        CriticChoice::Mlp { hidden, clip } => {
            let mut widths = vec![s.dim];
            widths.extend(hidden);
            widths.push(1);
            let family = MlpCritic::new(&widths, Some(*clip), &mut rng_from_seed(derive_seed(run, CRITIC)))?;
            train_with(init, &family, &target, &train, &eval, s.kl_samples, kl_seed)
        }
    };
    let path = out.map(|d| d.join(format!("trace_seed{seed}.csv")));
    match result {
        Ok(trace) => {
            if let Some(p) = &path {
                trace.write_csv(std::fs::File::create(p)?)?;
            }
            Ok(trace)
        }
        Err(failure) => {
            if let Some(p) = &path {
                failure.trace.write_csv(std::fs::File::create(p)?)?;
            }
            Err(failure.error)
        }
    }
}

fn train_with<C: Critic>(
    init: InvertibleGeneratorSpec,
    family: &C,
    target: &InvertibleGeneratorSpec,
    train: &TrainConfig,
    eval: &IpmConfig,
    kl_samples: usize,
    kl_seed: u64,
) -> std::result::Result<TrainTrace, Box<crate::training::TrainFailure>> {
    wgan_train(init, family, target, train, |step, g: &InvertibleGeneratorSpec| {
        Ok(Metrics {
            ipm_eval: Some(cold_start_ipm(family, target, g, eval, step)?),
            kl: Some(kl_to_target(target, g, kl_samples, derive_seed(kl_seed, step as u64))?),
        })
    })
    .map(|t| t.trace)
}

fn summarize_run(seed: u64, trace: &TrainTrace) -> Result<RunSummary> {
    let (kl, ipm): (Vec<f64>, Vec<f64>) = trace
        .checkpoints()
        .map(|r| (r.kl.unwrap_or(f64::NAN), r.ipm_eval.unwrap_or(f64::NAN)))
        .unzip();
    Ok(RunSummary {
        seed,
        initial_kl: kl[0],
        final_kl: kl[kl.len() - 1],
        spearman: spearman(&kl, &ipm)?,
    })
}

/// Trains one generator per entry of `config.seeds` against a single
/// ground truth. With `out` set, writes the traces, `summary.json` and two
/// SVG panels.
pub fn run_training_experiment(config: &ExperimentConfig, out: Option<&Path>) -> Result<TrainingReport> {
    config.validate()?;
    let mut traces = Vec::new();
    let mut runs = Vec::new();
    for &seed in &config.seeds {
        let trace = run_training_seed(config, seed, out)?;
        runs.push(summarize_run(seed, &trace)?);
        traces.push(trace);
    }
    let finals: Vec<f64> = runs.iter().map(|r| r.final_kl).collect();
    let mid = median_index(&finals);
    let summary = TrainingSummary {
        median_initial_kl: median(&runs.iter().map(|r| r.initial_kl).collect::<Vec<_>>()),
        median_final_kl: median(&finals),
        median_seed: runs[mid].seed,
        spearman_median_seed: runs[mid].spearman,
        runs,
    };
    if let Some(dir) = out {
        std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
        for (file, label, pick) in [
            ("kl.svg", "KL", (|r: &crate::training::TrainRow| r.kl) as fn(&_) -> Option<f64>),
            ("ipm_eval.svg", "IPM (eval)", |r| r.ipm_eval),
        ] {
            let curves: Vec<Vec<(f64, f64)>> = traces
                .iter()
                .map(|t| t.checkpoints().filter_map(|r| pick(r).map(|v| (r.step as f64, v))).collect())
                .collect();
            let names: Vec<String> = config.seeds.iter().map(|s| format!("seed {s}")).collect();
            let series: Vec<Series> = curves
                .iter()
                .zip(&names)
                .map(|(c, n)| Series { name: n, points: c, scatter: false })
                .collect();
            std::fs::write(dir.join(file), svg_plot(label, "generator step", label, &series))?;
        }
    }
    Ok(TrainingReport { summary, traces })
}
