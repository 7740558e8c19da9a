//! A modular reinforcement-learning framework built around three ideas:
//!
//! 1. **Tasks are decoupled from environments.** A [`framework::Task`] owns an
//!    episode end to end — environment dynamics, observation encoding, reward,
//!    success bookkeeping, and (optionally) a scripted expert — while
//!    [`framework::TaskSampler`]s decide *which* task instances a training run
//!    sees and in what order.
//! 2. **Training runs are staged pipelines.** A [`train::TrainingPipeline`] is a
//!    sequence of stages, each with its own loss mix (PPO, advantage
//!    actor-critic, imitation), schedules, and rollout geometry. Stages share
//!    one model and one optimizer, so imitation pretraining can hand off to RL
//!    fine-tuning without glue code.
//! 3. **Everything is reproducible.** All randomness flows from named,
//!    per-purpose streams of a single experiment seed; metrics, checkpoints,
//!    and the synchronous data-parallel trainer are deterministic down to the
//!    bit for a fixed configuration.
//!
//! The numeric core is self-contained: [`tensor`] provides dense tensors and
//! reverse-mode automatic differentiation over a recorded op tape, [`nn`] the
//! layers used by the built-in models, and [`optim`] an Adam optimizer with
//! linear learning-rate decay. Precision is generic: every experiment can run
//! in `f64` (the default) or `f32`.
//!
//! Built-in tasks live in [`grids`]: an instruction-following gridworld, a
//! hazardous river-crossing gridworld with corrupted demonstrations, and a
//! two-player coordination hunt. Experiment definitions wiring tasks, models,
//! and pipelines together are registered in [`experiments`].

pub mod algo;
pub mod check;
pub mod demos;
pub mod dist;
pub mod error;
pub mod experiments;
pub mod framework;
pub mod grids;
pub mod metrics;
pub mod nn;
pub mod optim;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Graph, Scalar, Tensor, Var};
