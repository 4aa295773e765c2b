use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::io::{svg_plot, write_csv, Series};
use super::stats::{jackknife_pearson, linear_fit, pearson};
use super::truth::{make_ground_truth_generator, perturb_generator};
use super::ExperimentConfig;
use crate::discriminators::ContrastCritic;
use crate::divergences::{ipm_estimate, kl_empirical, symmetric_kl, IpmConfig};
use crate::error::Result;
use crate::generators::Sampler;
use crate::{derive_seed, rng_from_seed};

pub const PAIRS_HEADER: &str = "pair_id,kl_pq,kl_qp,kl_sym,ipm,flagged";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairRow {
    pub pair_id: usize,
    pub kl_pq: f64,
    pub kl_qp: f64,
    pub kl_sym: f64,
    pub ipm: f64,
    pub flagged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub pairs: Vec<PairRow>,
    /// Correlation of `(ln kl_sym, ln ipm)` over the kept pairs.
    pub pearson_log: f64,
    /// Same over every usable pair, flagged ones included.
    pub pearson_log_all: f64,
    pub n_outliers_dropped: usize,
    /// Pairs with a nonpositive KL or IPM, which have no logarithm.
    pub n_degenerate: usize,
    /// Range of the leave-one-out correlations over the kept pairs.
    pub jackknife_min: f64,
    pub jackknife_max: f64,
    /// Least-squares fit `ln ipm ≈ slope·ln kl_sym + intercept`.
    pub log_slope: f64,
    pub log_intercept: f64,
}

/// Unit streams under a pair's seed.
const GROUND_TRUTH: u64 = 0;
const PERTURBATION: u64 = 1;
const NOISE_SCALE: u64 = 2;
const KL_P: u64 = 3;
const KL_Q: u64 = 4;
const IPM: u64 = 5;

/// Measures one pair `(G, G′)`.
pub fn measure_pair(config: &ExperimentConfig, pair_id: usize) -> Result<PairRow> {
    let s = &config.perturbation;
    let seed = derive_seed(config.seed, pair_id as u64);
    let g = make_ground_truth_generator(s.dim, s.layers, derive_seed(seed, GROUND_TRUTH))?;
    let u: f64 = rng_from_seed(derive_seed(seed, NOISE_SCALE)).random();
    let noise = if s.noise_min > 0.0 {
        (s.noise_min.ln() + u * (s.noise_max / s.noise_min).ln()).exp()
    } else {
        s.noise_min + u * (s.noise_max - s.noise_min)
    };
    let h = perturb_generator(&g, noise, derive_seed(seed, PERTURBATION))?;
    let kl_pq = kl_empirical(&g, &h.spec, &g.sample(s.kl_samples, derive_seed(seed, KL_P)))?.value;
    let kl_qp = kl_empirical(&h.spec, &g, &h.spec.sample(s.kl_samples, derive_seed(seed, KL_Q)))?.value;
    let family = ContrastCritic::from_generators(&g, &g)?;
    let ipm_config = IpmConfig {
        seed: derive_seed(seed, IPM),
        ..config.ipm.clone()
    };
    let ipm = ipm_estimate(&family, &g, &h.spec, &ipm_config)?.value;
    Ok(PairRow {
        pair_id,
        kl_pq,
        kl_qp,
        kl_sym: symmetric_kl(kl_pq, kl_qp),
        ipm,
        flagged: h.flagged,
    })
}

/// Correlation statistics for measured pairs. Flagged pairs are the
/// outliers; pairs whose KL or IPM is not positive are skipped.
pub fn correlate(pairs: Vec<PairRow>) -> Result<CorrelationResult> {
    let usable: Vec<&PairRow> = pairs.iter().filter(|p| p.kl_sym > 0.0 && p.ipm > 0.0).collect();
    let logs = |rows: &[&PairRow]| -> (Vec<f64>, Vec<f64>) {
        rows.iter().map(|p| (p.kl_sym.ln(), p.ipm.ln())).unzip()
    };
    let kept: Vec<&PairRow> = usable.iter().copied().filter(|p| !p.flagged).collect();
    let (lk, li) = logs(&kept);
    let (ak, ai) = logs(&usable);
    let jack = jackknife_pearson(&lk, &li)?;
    let (log_slope, log_intercept) = linear_fit(&lk, &li)?;
    Ok(CorrelationResult {
        pearson_log: pearson(&lk, &li)?,
        pearson_log_all: pearson(&ak, &ai)?,
        n_outliers_dropped: usable.len() - kept.len(),
        n_degenerate: pairs.len() - usable.len(),
        jackknife_min: jack.iter().copied().fold(f64::INFINITY, f64::min),
        jackknife_max: jack.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        log_slope,
        log_intercept,
        pairs,
    })
}

/// Measures `config.perturbation.pairs` pairs and correlates them. With
/// `out` set, writes `pairs.csv`, `summary.json` and `scatter.svg` there.
pub fn run_perturbation_experiment(config: &ExperimentConfig, out: Option<&Path>) -> Result<CorrelationResult> {
    config.validate()?;
    let pairs = (0..config.perturbation.pairs)
        .map(|i| measure_pair(config, i))
        .collect::<Result<Vec<_>>>()?;
    if let Some(dir) = out {
        write_csv(&dir.join("pairs.csv"), PAIRS_HEADER, &pairs)?;
    }
    let result = correlate(pairs)?;
    if let Some(dir) = out {
        std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&result)?)?;
        let pts = |flag: bool| -> Vec<(f64, f64)> {
            result
                .pairs
                .iter()
                .filter(|p| p.flagged == flag && p.kl_sym > 0.0 && p.ipm > 0.0)
                .map(|p| (p.kl_sym.ln(), p.ipm.ln()))
                .collect()
        };
        let (kept, dropped) = (pts(false), pts(true));
        let svg = svg_plot(
            &format!("pearson (log) = {:.4}", result.pearson_log),
            "ln KL_sym",
            "ln IPM",
            &[
                Series { name: "kept", points: &kept, scatter: true },
                Series { name: "flagged", points: &dropped, scatter: true },
            ],
        );
        std::fs::write(dir.join("scatter.svg"), svg)?;
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(id: usize, kl: f64, ipm: f64, flagged: bool) -> PairRow {
        PairRow {
            pair_id: id,
            kl_pq: kl,
            kl_qp: kl,
            kl_sym: kl,
            ipm,
            flagged,
        }
    }

    #[test]
    fn degenerate_and_flagged_pairs_are_excluded() {
        let rows = vec![
            row(0, 0.0, 1.0, false),
            row(1, 0.1, 10.0, false),
            row(2, 0.2, 20.0, false),
            row(3, 0.4, 40.0, false),
            row(4, 5.0, 1.0, true),
        ];
        let r = correlate(rows).unwrap();
        assert_eq!(r.n_degenerate, 1);
        assert_eq!(r.n_outliers_dropped, 1);
        assert!((r.pearson_log - 1.0).abs() < 1e-12);
        assert!((r.log_slope - 1.0).abs() < 1e-12);
        assert!((r.log_intercept - 100f64.ln()).abs() < 1e-12);
        assert!(r.pearson_log_all < r.pearson_log);
    }
}
