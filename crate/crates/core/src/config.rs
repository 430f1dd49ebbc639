//! Training configuration: every tunable of the optimization loop in one
//! serializable struct, so a run is reproducible from its manifest alone.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{NormKind, ScoreVariant};

/// Hyperparameters and run knobs. Defaults are the WN18RR setting
/// (`dim` 1000, learning rate 1e-3, 128 negatives, temperature 0.5,
/// margin 12) plus conventional batch/step counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Embedding dimension `d`; divisibility by 4 (Hamilton) or 2 (Hadamard)
    /// is checked at init.
    pub dim: usize,
    pub learning_rate: f64,
    /// Negative samples per positive triple.
    pub negatives: usize,
    /// Self-adversarial sampling temperature.
    pub alpha: f64,
    /// Fixed margin inside the logistic loss.
    pub gamma: f64,
    pub batch_size: usize,
    pub max_steps: u64,
    /// Validation (and model-selection) cadence in steps.
    pub valid_every: u64,
    pub norm: NormKind,
    pub variant: ScoreVariant,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 1000,
            learning_rate: 1e-3,
            negatives: 128,
            alpha: 0.5,
            gamma: 12.0,
            batch_size: 512,
            max_steps: 100_000,
            valid_every: 5_000,
            norm: NormKind::L1,
            variant: ScoreVariant::HamiltonNormalized,
            seed: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        fn bad(msg: String) -> Result<()> {
            Err(Error::Config(msg))
        }
        // NaN fails every comparison below, so it is rejected everywhere
        if self.dim == 0 {
            return bad("dim must be positive".into());
        }
        if !self.dim.is_multiple_of(self.variant.component_divisor()) {
            return bad(format!(
                "dim {} must be divisible by {} for the {} variant",
                self.dim,
                self.variant.component_divisor(),
                self.variant
            ));
        }
        if self.learning_rate.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
            return bad("learning_rate must be positive".into());
        }
        if self.negatives == 0 {
            return bad("negatives must be at least 1".into());
        }
        if self.alpha.partial_cmp(&0.0).is_none_or(|o| o == std::cmp::Ordering::Less) {
            return bad("alpha must be nonnegative".into());
        }
        if self.gamma.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
            return bad("gamma must be positive".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        for (name, value) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&value) {
                return bad(format!("{name} must lie in [0, 1)"));
            }
        }
        if self.adam_eps.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
            return bad("adam_eps must be positive".into());
        }
        Ok(())
    }
}
