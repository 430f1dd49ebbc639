//! Knowledge-graph completion with learnable quaternion relation rotations.
//!
//! A triple `(h, r, t)` is scored by `−‖ h ⊗ r◁H + r − t ⊗ r◁T ‖`: the head
//! and tail entity embeddings (blocks of quaternion coordinates) are rotated
//! by relation-specific unit quaternions, and the relation translation
//! bridges the gap. The crate provides the batched quaternion algebra with
//! analytic backward passes, benchmark dataset ingestion, self-adversarial
//! negative sampling, a sparse-Adam training loop with validation-driven
//! model selection, and the standard filtered link-prediction ranking
//! (MR / MRR / Hits@N over head and tail substitutions).

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod evaluator;
pub mod model;
pub mod quat;
pub mod sampler;
#[cfg(feature = "test-utils")]
pub mod test_utils;
pub mod trainer;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
pub use config::TrainConfig;
pub use data::{
    build_dataset, load_split, Dataset, DatasetStats, FilterIndex, RawTriple, Side, Split, Triple,
    TripleStore, Vocab,
};
pub use error::{Error, Result};
pub use evaluator::{evaluate_split, rank_one, EvalMetrics, EvalReport, Protocol};
pub use model::{
    distance, distance_backward, init_params, score, score_backward, ModelParams, NormKind,
    ParamTable, ScoreBatch, ScoreVariant, SparseGrads,
};
pub use quat::{QuatBlock, Real};
pub use sampler::{sample_negatives, self_adversarial_weights, NegativeBatch, NegativeSampler};
pub use trainer::{adam_step, loss, train, LogPoint, OptimizerState, TrainLog, TrainOptions, TrainOutcome};
