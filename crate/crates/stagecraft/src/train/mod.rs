//! Rollout collection and pipeline execution.
//!
//! The training loop is synchronous and on-policy: collect a fixed-length
//! window of experience from a vector of task samplers, compute losses per
//! the stage's geometry, apply an optimizer step, repeat until the stage
//! budget is spent, then move to the next stage.

pub mod buffer;
pub mod checkpoint;
pub mod collect;
pub mod evaluate;
pub mod pipeline;

pub use buffer::{Minibatch, RolloutBuffer};
pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT_VERSION};
pub use collect::CollectState;
pub use evaluate::{evaluate, evaluate_with, EvalReport, StepTrace};
pub use pipeline::{OffPolicyConfig, PipelineStage, TrainingPipeline};
