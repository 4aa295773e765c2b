use std::fs;
use std::path::Path;
use std::process::Command;

use nalgebra::DVector;
use serde_json::json;

use ralab::divergences::kl_empirical;
use ralab::experiments::io::parse_csv;
use ralab::experiments::*;
use ralab::generators::Sampler;
use ralab::training::{TrainTrace, TRACE_HEADER};

/// Kolmogorov-Smirnov p-value for a sample against `cdf`, using the
/// asymptotic distribution with the Stephens small-sample correction.
fn ks_p_value(mut x: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let d = x
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = cdf(v);
            ((i + 1) as f64 / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max);
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    // The series converges slowly near zero, where Q is 1 to double precision.
    if lambda < 0.2 {
        return 1.0;
    }
    let q: f64 = (1..=100)
        .map(|k| {
            let k = k as f64;
            let sign = if k as i64 % 2 == 1 { 1.0 } else { -1.0 };
            2.0 * sign * (-2.0 * k * k * lambda * lambda).exp()
        })
        .sum();
    q.clamp(0.0, 1.0)
}

#[test]
fn ks_oracle_rejects_a_shifted_sample() {
    let x: Vec<f64> = (0..2000).map(|i| (i as f64 + 0.5) / 2000.0).collect();
    assert!(ks_p_value(x.clone(), |v| v) > 0.99);
    assert!(ks_p_value(x, |v: f64| (v * 1.1).min(1.0)) < 1e-3);
}

#[test]
fn circle_points_are_uniform_on_the_unit_circle() {
    let x = make_circle(1_000_000, 3);
    for r in x.row_iter() {
        assert!((r[0].hypot(r[1]) - 1.0).abs() < 1e-12);
    }
    let mean = x.row_mean();
    assert!(mean.norm() < 0.005, "mean {mean}");
    assert_eq!(make_circle(10, 4), make_circle(10, 4));
    let angles: Vec<f64> = make_circle(10_000, 5)
        .row_iter()
        .map(|r| r[1].atan2(r[0]))
        .collect();
    let pi = std::f64::consts::PI;
    assert!(ks_p_value(angles, |a| (a + pi) / (2.0 * pi)) > 0.01);
}

#[test]
fn swissroll_radius_is_uniform() {
    let (lo, hi) = SWISSROLL_RANGE;
    let x = make_swissroll(10_000, 6);
    let z: Vec<f64> = x.row_iter().map(|r| r[0].hypot(r[1])).collect();
    assert!(z.iter().all(|&v| v >= lo - 1e-12 && v <= hi + 1e-12));
    let p = ks_p_value(z, |v| (v - lo) / (hi - lo));
    assert!(p > 0.01, "KS p-value {p}");
    let [a, b] = swissroll_point(0.25);
    assert!((a + 0.25).abs() < 1e-15 && b.abs() < 1e-15);
    assert_eq!(make_swissroll(5, 1), make_swissroll(5, 1));
}

#[test]
fn ground_truth_generators_are_well_conditioned() {
    let (lo, hi) = GROUND_TRUTH_SINGULAR_RANGE;
    for seed in 0..10 {
        let g = make_ground_truth_generator(5, 3, seed).unwrap();
        for l in &g.layers {
            let s = l.weight.clone().singular_values();
            assert!(s.iter().all(|&v| v >= lo - 1e-10 && v <= hi + 1e-10), "{s}");
            assert!(l.bias.iter().all(|&b| b == 0.0));
        }
        let x = g.sample(50, seed);
        let back = g.forward_rows(&g.inverse_rows(&x).unwrap()).unwrap();
        assert!((back - &x).amax() < 1e-8);
        assert_eq!(g, make_ground_truth_generator(5, 3, seed).unwrap());
    }
}

#[test]
fn perturbation_moves_the_distribution() {
    let g = make_ground_truth_generator(4, 2, 1).unwrap();
    assert_eq!(perturb_generator(&g, 0.0, 9).unwrap().spec, g);
    for seed in 0..10 {
        let p = perturb_generator(&g, 0.05, seed).unwrap();
        let x = g.sample(20_000, 100 + seed);
        let kl = kl_empirical(&g, &p.spec, &x).unwrap();
        assert!(kl.value > 0.0, "seed {seed}: {kl:?}");
    }
}

#[test]
fn flag_tracks_inverse_norm() {
    let g = make_ground_truth_generator(3, 2, 2).unwrap();
    let mut seen = [false; 2];
    for seed in 0..40 {
        let p = perturb_generator(&g, 1.5, seed).unwrap();
        let inv = p
            .spec
            .layers
            .iter()
            .map(|l| {
                let s = l.weight.clone().singular_values();
                1.0 / s.min()
            })
            .fold(0.0, f64::max);
        assert!((inv - p.max_inverse_norm).abs() <= 1e-9 * inv);
        assert_eq!(p.flagged, inv > p.spec.constraints.r_w);
        seen[p.flagged as usize] = true;
    }
    assert_eq!(seen, [true, true]);
}

fn small_perturbation() -> ExperimentConfig {
    ExperimentConfig::from_overrides(
        ExperimentKind::Perturbation,
        Scale::Desk,
        json!({
            "seed": 4,
            "perturbation": {"dim": 3, "pairs": 20, "kl_samples": 4000},
            "ipm": {"restarts": 2, "steps": 100, "eval_batch": 1024}
        }),
    )
    .unwrap()
}

fn without_wall_ms(csv: &str) -> String {
    csv.lines()
        .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn perturbation_outputs_round_trip_and_repeat() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let config = small_perturbation();
    let results: Vec<_> = dirs
        .iter()
        .map(|d| run_perturbation_experiment(&config, Some(d.path())).unwrap())
        .collect();
    let read = |d: &Path, f: &str| fs::read_to_string(d.join(f)).unwrap();
    for f in ["pairs.csv", "summary.json", "scatter.svg"] {
        assert_eq!(read(dirs[0].path(), f), read(dirs[1].path(), f), "{f}");
    }
    let csv = read(dirs[0].path(), "pairs.csv");
    assert_eq!(csv.lines().next().unwrap(), PAIRS_HEADER);
    let rows: Vec<PairRow> = parse_csv(&csv, PAIRS_HEADER).unwrap();
    assert_eq!(rows, results[0].pairs);
    assert_eq!(rows.len(), 20);

    let r = &results[0];
    assert!((-1.0..=1.0).contains(&r.pearson_log));
    assert_eq!(r.n_outliers_dropped, rows.iter().filter(|p| p.flagged).count());
    if r.pearson_log.abs() >= 0.3 {
        assert!(r.jackknife_min.signum() == r.jackknife_max.signum());
        assert_eq!(r.pearson_log.signum(), r.pearson_log_all.signum());
    }
    let summary: serde_json::Value = serde_json::from_str(&read(dirs[0].path(), "summary.json")).unwrap();
    assert_eq!(summary["pearson_log"].as_f64().unwrap(), r.pearson_log);
}

#[test]
fn degenerate_pairs_are_skipped() {
    let mut pairs: Vec<PairRow> = (0..6)
        .map(|i| {
            let k = 0.01 * (i + 1) as f64;
            PairRow {
                pair_id: i,
                kl_pq: k,
                kl_qp: k,
                kl_sym: 2.0 * k,
                ipm: 0.1 * k.sqrt(),
                flagged: false,
            }
        })
        .collect();
    pairs[2].kl_pq = 0.0;
    pairs[2].kl_qp = 0.0;
    pairs[2].kl_sym = 0.0;
    pairs[4].ipm = -0.01;
    let r = correlate(pairs).unwrap();
    assert_eq!(r.n_degenerate, 2);
    assert!((r.pearson_log - 1.0).abs() < 1e-12);
    assert!((r.log_slope - 0.5).abs() < 1e-12);
}

fn small_training(critic: serde_json::Value) -> ExperimentConfig {
    ExperimentConfig::from_overrides(
        ExperimentKind::Invertible,
        Scale::Desk,
        json!({
            "seeds": [0, 1],
            "invertible": {"dim": 2, "kl_samples": 2000, "critic": critic},
            "train": {"total_gen_steps": 60, "eval_every": 20},
            "ipm": {"restarts": 2, "steps": 50, "eval_batch": 512}
        }),
    )
    .unwrap()
}

#[test]
fn training_traces_repeat_and_round_trip() {
    let config = small_training(json!({"kind": "conjoined"}));
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let reports: Vec<_> = dirs
        .iter()
        .map(|d| run_training_experiment(&config, Some(d.path())).unwrap())
        .collect();
    for seed in [0, 1] {
        let name = format!("trace_seed{seed}.csv");
        let a = fs::read_to_string(dirs[0].path().join(&name)).unwrap();
        let b = fs::read_to_string(dirs[1].path().join(&name)).unwrap();
        assert_eq!(a.lines().next().unwrap(), TRACE_HEADER);
        assert_eq!(without_wall_ms(&a), without_wall_ms(&b));
        let back = TrainTrace::read_csv(a.as_bytes()).unwrap();
        assert_eq!(back, reports[0].traces[seed as usize]);
        assert_eq!(back.checkpoints().count(), 4);
    }
    assert_eq!(reports[0].summary, reports[1].summary);
    assert_eq!(reports[0].summary.runs.len(), 2);
}

#[test]
fn mlp_critic_variant_runs() {
    let config = small_training(json!({"kind": "mlp", "hidden": [50, 10], "clip": 0.1}));
    let report = run_training_experiment(&config, None).unwrap();
    for r in &report.summary.runs {
        assert!(r.initial_kl.is_finite() && r.final_kl.is_finite());
        assert!((-1.0..=1.0).contains(&r.spearman));
    }
}

fn tracking(kind: ExperimentKind, overrides: serde_json::Value) -> ExperimentConfig {
    ExperimentConfig::from_overrides(kind, Scale::Desk, overrides).unwrap()
}

#[test]
fn tracking_outputs_repeat() {
    let config = tracking(
        ExperimentKind::Circle,
        json!({"seeds": [5], "train": {"total_gen_steps": 40, "eval_every": 10},
               "ipm": {"restarts": 1, "steps": 30, "eval_batch": 512}}),
    );
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        run_experiment(&config, d.path()).unwrap();
    }
    let read = |i: usize, f: &str| fs::read_to_string(dirs[i].path().join(f)).unwrap();
    let csv = read(0, "w1_seed5.csv");
    assert_eq!(csv, read(1, "w1_seed5.csv"));
    assert_eq!(csv.lines().next().unwrap(), TRACKING_HEADER);
    let rows: Vec<TrackingRow> = parse_csv(&csv, TRACKING_HEADER).unwrap();
    assert_eq!(rows.iter().map(|r| r.step).collect::<Vec<_>>(), [0, 10, 20, 30, 40]);
    assert_eq!(read(0, "summary.json"), read(1, "summary.json"));
    assert_eq!(read(0, "config.json"), read(1, "config.json"));
}

fn check_desk_tracking(kind: ExperimentKind) {
    let report = run_w1_tracking_experiment(&tracking(kind, json!({})), None).unwrap();
    let s = &report.summary;
    assert!(s.median_final_w1 < s.median_initial_w1, "{s:?}");
    assert!(s.correlation_median_seed >= 0.5, "{s:?}");
}

#[test]
fn swissroll_desk_tracking() {
    check_desk_tracking(ExperimentKind::Swissroll);
}

#[test]
fn circle_desk_tracking() {
    check_desk_tracking(ExperimentKind::Circle);
}

#[test]
fn cli_runs_and_reports_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        json!({"perturbation": {"dim": 2, "pairs": 20, "kl_samples": 1000},
               "ipm": {"restarts": 1, "steps": 20, "eval_batch": 256}})
        .to_string(),
    )
    .unwrap();
    let out = dir.path().join("out");
    let run = |args: &[&str]| Command::new(env!("CARGO_BIN_EXE_ralab")).args(args).output().unwrap();
    let ok = run(&[
        "perturbation",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "11",
    ]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    let stdout = String::from_utf8(ok.stdout).unwrap();
    assert_eq!(stdout.lines().next().unwrap(), PAIRS_HEADER);
    assert_eq!(stdout, fs::read_to_string(out.join("pairs.csv")).unwrap());
    let resolved: ExperimentConfig = serde_json::from_str(&fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(resolved.seed, 11);

    fs::write(&cfg, r#"{"perturbation": {"pairs": 3}}"#).unwrap();
    let bad = run(&["perturbation", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(1));
    let usage = run(&["nonsense", "--config", "x", "--out", "y"]);
    assert_eq!(usage.status.code(), Some(1));
}

#[test]
fn median_seed_uses_final_values() {
    let finals = [0.3, 0.1, 0.2];
    assert_eq!(stats::median_index(&finals), 2);
    let v = DVector::from_vec(finals.to_vec());
    assert_eq!(stats::median(v.as_slice()), 0.2);
}
