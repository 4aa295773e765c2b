use std::path::Path;

use serde::{Deserialize, Serialize};

use super::data::{Circle, SwissRoll};
use super::io::{svg_plot, write_csv, Series};
use super::stats::{median, median_index, pearson};
use super::{ExperimentConfig, ExperimentKind};
use crate::discriminators::MlpCritic;
use crate::divergences::{w1_exact, IpmConfig};
use crate::error::{Error, Result};
use crate::generators::Sampler;
use crate::training::{cold_start_ipm, wgan_train, Metrics, MlpGenerator, TrainConfig, TrainTrace};
use crate::{derive_seed, rng_from_seed};

pub const TRACKING_HEADER: &str = "step,ipm,w1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackingRow {
    pub step: usize,
    pub ipm: f64,
    pub w1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackingRun {
    pub seed: u64,
    pub initial_w1: f64,
    pub final_w1: f64,
    /// Pearson correlation of IPM and W1 over checkpoints.
    pub correlation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackingSummary {
    pub runs: Vec<TrackingRun>,
    pub median_initial_w1: f64,
    pub median_final_w1: f64,
    pub median_correlation: f64,
    /// Correlation of the run whose final W1 is the median.
    pub correlation_median_seed: f64,
}

#[derive(Clone, Debug)]
pub struct TrackingReport {
    pub summary: TrackingSummary,
    pub rows: Vec<Vec<TrackingRow>>,
    pub traces: Vec<TrainTrace>,
}

const GENERATOR: u64 = 0;
const CRITIC: u64 = 1;
const TRAIN: u64 = 2;
const EVAL_IPM: u64 = 3;
const EVAL_W1: u64 = 4;

fn run_seed<P: Sampler>(config: &ExperimentConfig, target: &P, seed: u64) -> Result<(Vec<TrackingRow>, TrainTrace)> {
    let t = &config.tracking;
    let run = derive_seed(config.seed, seed);
    let generator = MlpGenerator::new(&t.generator, &mut rng_from_seed(derive_seed(run, GENERATOR)))?;
    let critic = MlpCritic::new(&t.critic, t.train_clip, &mut rng_from_seed(derive_seed(run, CRITIC)))?;
    let eval_family = MlpCritic {
        clip: Some(t.eval_clip),
        ..critic.clone()
    };
    let train = TrainConfig {
        seed: derive_seed(run, TRAIN),
        ..config.train.clone()
    };
    let eval = IpmConfig {
        seed: derive_seed(run, EVAL_IPM),
        ..config.ipm.clone()
    };
    let w1_seed = derive_seed(run, EVAL_W1);
    let mut rows = Vec::new();
    let trained = wgan_train(generator, &critic, target, &train, |step, g: &MlpGenerator| {
        let ipm = cold_start_ipm(&eval_family, target, g, &eval, step)?;
        let s = derive_seed(w1_seed, step as u64);
        let w1 = w1_exact(&target.sample(t.w1_batch, derive_seed(s, 0)), &g.sample(t.w1_batch, derive_seed(s, 1)))?;
        rows.push(TrackingRow { step, ipm, w1 });
        Ok(Metrics {
            ipm_eval: Some(ipm),
            kl: None,
        })
    });
    match trained {
        Ok(t) => Ok((rows, t.trace)),
        Err(f) => Err(f.error),
    }
}

/// Trains an MLP generator on the circle or Swiss roll for every seed and
/// records the evaluation IPM and exact W1 on fresh batches at each
/// checkpoint. With `out` set, writes `w1_seed{seed}.csv`,
/// `trace_seed{seed}.csv`, `summary.json` and `tracking.svg`.
pub fn run_w1_tracking_experiment(config: &ExperimentConfig, out: Option<&Path>) -> Result<TrackingReport> {
    config.validate()?;
    let mut all_rows = Vec::new();
    let mut traces = Vec::new();
    let mut runs = Vec::new();
    for &seed in &config.seeds {
        let (rows, trace) = match config.kind {
            ExperimentKind::Circle => run_seed(config, &Circle, seed)?,
            ExperimentKind::Swissroll => run_seed(config, &SwissRoll, seed)?,
            other => return Err(Error::InvalidSpec(format!("w1 tracking runs on toy data, not {other:?}"))),
        };
        if let Some(dir) = out {
            write_csv(&dir.join(format!("w1_seed{seed}.csv")), TRACKING_HEADER, &rows)?;
            trace.write_csv(std::fs::File::create(dir.join(format!("trace_seed{seed}.csv")))?)?;
        }
        let ipm: Vec<f64> = rows.iter().map(|r| r.ipm).collect();
        let w1: Vec<f64> = rows.iter().map(|r| r.w1).collect();
        runs.push(TrackingRun {
            seed,
            initial_w1: w1[0],
            final_w1: w1[w1.len() - 1],
            correlation: pearson(&ipm, &w1)?,
        });
        all_rows.push(rows);
        traces.push(trace);
    }
    let finals: Vec<f64> = runs.iter().map(|r| r.final_w1).collect();
    let summary = TrackingSummary {
        median_initial_w1: median(&runs.iter().map(|r| r.initial_w1).collect::<Vec<_>>()),
        median_final_w1: median(&finals),
        median_correlation: median(&runs.iter().map(|r| r.correlation).collect::<Vec<_>>()),
        correlation_median_seed: runs[median_index(&finals)].correlation,
        runs,
    };
    if let Some(dir) = out {
        std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
        let ipm: Vec<(f64, f64)> = all_rows[0].iter().map(|r| (r.step as f64, r.ipm)).collect();
        let w1: Vec<(f64, f64)> = all_rows[0].iter().map(|r| (r.step as f64, r.w1)).collect();
        let svg = svg_plot(
            &format!("seed {}", config.seeds[0]),
            "generator step",
            "distance",
            &[
                Series { name: "IPM (eval)", points: &ipm, scatter: false },
                Series { name: "W1", points: &w1, scatter: false },
            ],
        );
        std::fs::write(dir.join("tracking.svg"), svg)?;
    }
    Ok(TrackingReport {
        summary,
        rows: all_rows,
        traces,
    })
}
