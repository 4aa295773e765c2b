use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::divergences::{IpmConfig, Regularization};
use crate::error::{Error, Result};
use crate::training::{RmsPropConfig, TrainConfig, DEFAULT_GP_COEFFICIENT};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Circle,
    Swissroll,
    Invertible,
    Perturbation,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Scale {
    #[default]
    Desk,
    Paper,
}

/// Discriminator used while training an invertible generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CriticChoice {
    /// Difference of two log-density networks shaped like the generator.
    Conjoined,
    /// Leaky-ReLU MLP with the given hidden widths and entrywise clip.
    Mlp { hidden: Vec<usize>, clip: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvertibleSetup {
    pub dim: usize,
    pub layers: usize,
    pub kl_samples: usize,
    pub critic: CriticChoice,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSetup {
    pub dim: usize,
    pub layers: usize,
    pub pairs: usize,
    /// Each pair draws its noise scale log-uniformly from
    /// `[noise_min, noise_max]`.
    pub noise_min: f64,
    pub noise_max: f64,
    pub kl_samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackingSetup {
    pub generator: Vec<usize>,
    pub critic: Vec<usize>,
    /// Entrywise clip of the training critic; `None` leaves it unconstrained
    /// (use with a gradient penalty).
    pub train_clip: Option<f64>,
    /// Entrywise clip of the cold-start evaluation critic.
    pub eval_clip: f64,
    pub w1_batch: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub scale: Scale,
    pub seed: u64,
    /// Training runs, one per entry.
    pub seeds: Vec<u64>,
    pub invertible: InvertibleSetup,
    pub perturbation: PerturbationSetup,
    pub tracking: TrackingSetup,
    pub train: TrainConfig,
    pub ipm: IpmConfig,
}

impl ExperimentConfig {
    pub fn preset(kind: ExperimentKind, scale: Scale) -> Self {
        let paper = scale == Scale::Paper;
        let toy = matches!(kind, ExperimentKind::Circle | ExperimentKind::Swissroll);
        let train = if toy {
            TrainConfig {
                optimizer: RmsPropConfig::with_lr(if paper { 1e-4 } else { 3e-4 }),
                regularization: Regularization::GradientPenalty {
                    coefficient: DEFAULT_GP_COEFFICIENT,
                },
                total_gen_steps: if paper { 10_000 } else { 3000 },
                eval_every: if paper { 500 } else { 200 },
                ..TrainConfig::default()
            }
        } else {
            TrainConfig {
                optimizer: RmsPropConfig::with_lr(if paper { 1e-4 } else { 3e-4 }),
                total_gen_steps: if paper { 10_000 } else { 3000 },
                eval_every: if paper { 500 } else { 100 },
                ..TrainConfig::default()
            }
        };
        Self {
            kind,
            scale,
            seed: 0,
            seeds: (0..if toy { 3 } else { 6 }).collect(),
            invertible: InvertibleSetup {
                dim: if paper { 10 } else { 4 },
                layers: 2,
                kl_samples: 100_000,
                critic: CriticChoice::Conjoined,
            },
            perturbation: PerturbationSetup {
                dim: if paper { 10 } else { 6 },
                layers: 2,
                pairs: if paper { 100 } else { 30 },
                noise_min: 0.02,
                noise_max: 0.3,
                kl_samples: 100_000,
            },
            tracking: TrackingSetup {
                generator: vec![2, 50, 50, 2],
                critic: vec![2, 50, 50, 1],
                train_clip: None,
                eval_clip: 0.1,
                w1_batch: 512,
            },
            train,
            // Cold-start evaluation dominates toy runs at desk scale.
            ipm: if toy && !paper {
                IpmConfig {
                    restarts: 3,
                    steps: 300,
                    ..IpmConfig::default()
                }
            } else {
                IpmConfig::default()
            },
        }
    }

    /// The preset for `kind` and `scale` with `overrides` merged on top;
    /// objects merge key by key, anything else replaces.
    pub fn from_overrides(kind: ExperimentKind, scale: Scale, overrides: Value) -> Result<Self> {
        let mut base = serde_json::to_value(Self::preset(kind, scale))?;
        merge(&mut base, overrides);
        let config: Self = serde_json::from_value(base)?;
        if config.kind != kind {
            return Err(Error::InvalidSpec(format!(
                "config is for {:?}, not {kind:?}",
                config.kind
            )));
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(kind: ExperimentKind, scale: Scale, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_overrides(kind, scale, serde_json::from_str(&text)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.ipm.validate()?;
        let bad = |m: String| Err(Error::InvalidSpec(m));
        let p = &self.perturbation;
        match self.kind {
            ExperimentKind::Perturbation => {
                if p.pairs < 20 {
                    return bad(format!("perturbation needs at least 20 pairs (got {})", p.pairs));
                }
                if !(p.noise_min >= 0.0 && p.noise_min <= p.noise_max) {
                    return bad(format!("noise range [{}, {}]", p.noise_min, p.noise_max));
                }
                if p.dim == 0 || p.layers == 0 || p.kl_samples < 2 {
                    return bad("perturbation dim, layers and kl_samples".into());
                }
            }
            ExperimentKind::Invertible => {
                let s = &self.invertible;
                if s.dim == 0 || s.layers == 0 || s.kl_samples < 2 || self.seeds.is_empty() {
                    return bad("invertible dim, layers, kl_samples and seeds".into());
                }
            }
            ExperimentKind::Circle | ExperimentKind::Swissroll => {
                let t = &self.tracking;
                if self.seeds.is_empty() || t.generator.first() != Some(&2) || t.generator.last() != Some(&2) {
                    return bad("tracking needs seeds and a 2 → 2 generator".into());
                }
                if t.critic.first() != Some(&2) || t.critic.last() != Some(&1) {
                    return bad("tracking critic must map 2 → 1".into());
                }
                if t.w1_batch < 1 || t.w1_batch > crate::divergences::MAX_W1_BATCH || !(t.eval_clip > 0.0) {
                    return bad("tracking w1 batch or eval clip".into());
                }
            }
        }
        if has_duplicates(&self.seeds) {
            return bad("seeds repeat".into());
        }
        Ok(())
    }
}

fn has_duplicates(v: &[u64]) -> bool {
    let mut s = v.to_vec();
    s.sort_unstable();
    s.windows(2).any(|w| w[0] == w[1])
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn presets_validate() {
        for kind in [
            ExperimentKind::Circle,
            ExperimentKind::Swissroll,
            ExperimentKind::Invertible,
            ExperimentKind::Perturbation,
        ] {
            for scale in [Scale::Desk, Scale::Paper] {
                ExperimentConfig::preset(kind, scale).validate().unwrap();
            }
        }
    }

    #[test]
    fn overrides_merge_into_preset() {
        let c = ExperimentConfig::from_overrides(
            ExperimentKind::Perturbation,
            Scale::Desk,
            json!({"perturbation": {"pairs": 25}, "ipm": {"restarts": 2}, "seed": 9}),
        )
        .unwrap();
        assert_eq!(c.perturbation.pairs, 25);
        assert_eq!(c.perturbation.dim, 6);
        assert_eq!(c.ipm.restarts, 2);
        assert_eq!(c.ipm.steps, 500);
        assert_eq!(c.seed, 9);
    }

    #[test]
    fn rejects_bad_overrides() {
        let k = ExperimentKind::Perturbation;
        assert!(ExperimentConfig::from_overrides(k, Scale::Desk, json!({"perturbation": {"pairs": 5}})).is_err());
        assert!(ExperimentConfig::from_overrides(k, Scale::Desk, json!({"bogus": 1})).is_err());
        assert!(ExperimentConfig::from_overrides(k, Scale::Desk, json!({"kind": "circle"})).is_err());
        assert!(ExperimentConfig::from_overrides(k, Scale::Desk, json!({"seeds": [1, 1]})).is_err());
    }

    #[test]
    fn config_round_trips_through_json() {
        let c = ExperimentConfig::preset(ExperimentKind::Swissroll, Scale::Paper);
        let back: ExperimentConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }
}
