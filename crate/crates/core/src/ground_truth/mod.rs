//! Ground-truth evaluators: an MNIST MLP with a sigmoid slope of choice and
//! a small character-level language model built around a recurrent cell.

mod cache;
mod charlm;
mod mnist;

pub use cache::{CachedEvaluator, GroundTruthCache};
pub use charlm::{eval_cell, CharLmConfig, CharLmEvaluator, CharLmTask};
pub use mnist::{eval_mnist_slope, MnistConfig, MnistData, MnistEvaluator};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::motif::Motif;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Accuracy,
    Loss,
}

/// One ground-truth evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRecord {
    pub motif: Motif,
    pub metric: f64,
    pub metric_kind: MetricKind,
    pub seed: u64,
    pub config_fingerprint: String,
    /// Seeds of the individual repeats averaged into `metric`.
    #[serde(default)]
    pub repeat_seeds: Vec<u64>,
}

impl GroundTruthRecord {
    /// The metric as a loss (lower is better): `1 − accuracy` for accuracies.
    pub fn loss(&self) -> f64 {
        match self.metric_kind {
            MetricKind::Accuracy => 1.0 - self.metric,
            MetricKind::Loss => self.metric,
        }
    }
}

/// Evaluation configuration for either task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "kebab-case")]
pub enum EvalConfig {
    MnistSlope(MnistConfig),
    CharLm(CharLmConfig),
}

impl EvalConfig {
    /// Hex SHA-256 of the canonical JSON form.
    pub fn fingerprint(&self) -> String {
        fingerprint(self)
    }
}

pub(crate) fn fingerprint<T: Serialize>(cfg: &T) -> String {
    let json = serde_json::to_vec(cfg).expect("configs serialize");
    Sha256::digest(&json)
        .iter()
        .take(16)
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Something that can produce a ground-truth record for a motif.
pub trait Evaluator: Sync {
    fn evaluate(&self, motif: &Motif, seed: u64) -> Result<GroundTruthRecord>;
    fn fingerprint(&self) -> String;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fingerprint_tracks_config() {
        let a = EvalConfig::MnistSlope(MnistConfig::desk_scale());
        let mut m = MnistConfig::desk_scale();
        m.epochs += 1;
        let b = EvalConfig::MnistSlope(m);
        assert_eq!(a.fingerprint(), a.clone().fingerprint());
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint().len(), 32);
    }

    #[test]
    fn accuracy_becomes_loss() {
        let r = GroundTruthRecord {
            motif: Motif::slope(0.5).unwrap(),
            metric: 0.75,
            metric_kind: MetricKind::Accuracy,
            seed: 0,
            config_fingerprint: String::new(),
            repeat_seeds: vec![],
        };
        assert_eq!(r.loss(), 0.25);
    }
}
