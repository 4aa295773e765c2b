//! Desk-scale experiment protocols: perturbed invertible generator pairs,
//! WGAN training of invertible generators against the conjoined critic, and
//! W1 tracking on the circle and Swiss roll. Each writes CSV and JSON
//! results plus SVG panels.

mod config;
mod convergence;
mod data;
pub mod io;
mod perturbation;
pub mod stats;
mod tracking;
mod truth;

pub use config::{
    CriticChoice, ExperimentConfig, ExperimentKind, InvertibleSetup, PerturbationSetup, Scale,
    TrackingSetup,
};
pub use convergence::{
    ground_truth, run_training_experiment, run_training_seed, RunSummary, TrainingReport,
    TrainingSummary,
};
pub use data::{make_circle, make_swissroll, swissroll_point, Circle, SwissRoll, SWISSROLL_RANGE};
pub use perturbation::{
    correlate, measure_pair, run_perturbation_experiment, CorrelationResult, PairRow, PAIRS_HEADER,
};
pub use tracking::{
    run_w1_tracking_experiment, TrackingReport, TrackingRow, TrackingRun, TrackingSummary,
    TRACKING_HEADER,
};
pub use truth::{
    make_ground_truth_generator, perturb_generator, Perturbed, GROUND_TRUTH_SINGULAR_RANGE,
    GROUND_TRUTH_SLOPE,
};

use std::path::Path;

use crate::error::Result;

/// Runs `config.kind` and writes its outputs plus the resolved
/// `config.json` into `out`. Returns one CSV row per pair or seed.
pub fn run_experiment(config: &ExperimentConfig, out: &Path) -> Result<String> {
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("config.json"), serde_json::to_string_pretty(config)?)?;
    match config.kind {
        ExperimentKind::Perturbation => {
            let r = run_perturbation_experiment(config, Some(out))?;
            io::csv_string(PAIRS_HEADER, &r.pairs)
        }
        ExperimentKind::Invertible => {
            let r = run_training_experiment(config, Some(out))?;
            io::csv_string("seed,initial_kl,final_kl,spearman", &r.summary.runs)
        }
        ExperimentKind::Circle | ExperimentKind::Swissroll => {
            let r = run_w1_tracking_experiment(config, Some(out))?;
            io::csv_string("seed,initial_w1,final_w1,correlation", &r.summary.runs)
        }
    }
}
