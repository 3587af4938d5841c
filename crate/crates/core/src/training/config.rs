use crate::error::{Error, Result};
use crate::model::ArchConfig;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// How the per-prefix value term scores the cumulative prediction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossVariant {
    /// Squared error `(φ₀ + Σ_{i≤k} Δ_i − y)²` for both tasks.
    #[default]
    CombinedSq,
    /// Binary cross-entropy of `σ(φ₀ + Σ_{i≤k} Δ_i)` against `y`; regression
    /// tasks fall back to squared error.
    BceMarginal,
}

/// Training hyperparameters. The network structure fields sit at the top
/// level next to the loss weights `lambda_v` and `lambda_s`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    #[serde(flatten)]
    pub arch: ArchConfig,
    pub lambda_v: f64,
    pub lambda_s: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub loss_variant: LossVariant,
    /// Also distill the attribution head on a random prefix of each sampled
    /// order, so attributions of strict subsets are trained as well.
    pub distill_prefix_subsets: bool,
    /// Samples scored for the per-epoch metric in the history (0 disables).
    pub history_eval_samples: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            arch: ArchConfig::default(),
            lambda_v: 1.0,
            lambda_s: 1.0,
            learning_rate: 1e-3,
            batch_size: 128,
            epochs: 50,
            seed: 0,
            loss_variant: LossVariant::CombinedSq,
            distill_prefix_subsets: true,
            history_eval_samples: 1000,
        }
    }
}

impl TrainConfig {
    /// A configuration on the small desk architecture.
    pub fn desk() -> Self {
        TrainConfig {
            arch: ArchConfig::desk(),
            ..TrainConfig::default()
        }
    }

    pub fn problems(&self) -> Vec<String> {
        let mut p = self.arch.problems();
        if !(self.lambda_v.is_finite() && self.lambda_v >= 0.0) {
            p.push("lambda_v must be >= 0".into());
        }
        if !(self.lambda_s.is_finite() && self.lambda_s >= 0.0) {
            p.push("lambda_s must be >= 0".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            p.push("learning_rate must be > 0".into());
        }
        if self.batch_size == 0 {
            p.push("batch_size must be > 0".into());
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(p))
        }
    }

    /// Reads a JSON config; unspecified fields take their defaults. Every
    /// validation problem is reported at once.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::path(path, e))?;
        let cfg: TrainConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::path(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_and_defaults() {
        let cfg: TrainConfig = serde_json::from_str(
            r#"{"lambda_s": 0.0001, "embedding_dimension": 16, "loss_variant": "bce-marginal"}"#,
        )
        .unwrap();
        assert_eq!(cfg.lambda_s, 1e-4);
        assert_eq!(cfg.arch.embedding_dimension, 16);
        assert_eq!(cfg.loss_variant, LossVariant::BceMarginal);
        assert_eq!(cfg.lambda_v, 1.0);
        let back: TrainConfig =
            serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn lists_every_problem() {
        let cfg = TrainConfig {
            lambda_v: -1.0,
            lambda_s: f64::NAN,
            batch_size: 0,
            ..TrainConfig::default()
        };
        match cfg.validate() {
            Err(Error::Validation(p)) => assert_eq!(p.len(), 3, "{p:?}"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }
}
