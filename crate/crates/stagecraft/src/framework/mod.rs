//! Core abstractions: tasks over environments, samplers, models,
//! experiments, and the registry.
//!
//! The load-bearing idea is decoupling: an *environment* holds world state
//! with no goal; a *task* defines actions, rewards, and success criteria on
//! top of one; a *sampler* generates fresh task instances deterministically
//! from a seed; a *model* maps observations to action logits and values; an
//! *experiment* binds them together with a training pipeline and proves at
//! construction time that their contracts agree.

pub mod experiment;
pub mod model;
pub mod overrides;
pub mod registry;
pub mod rng;
pub mod spaces;
pub mod task;

pub use experiment::{EvalProtocol, ExperimentConfig, MachineParams, ModelBuilder, SamplerBuilder};
pub use model::{ActorCriticModel, ModelOutput, SeqOutput};
pub use overrides::ParamBag;
pub use registry::{ExperimentBuilder, Registry};
pub use rng::{rng_from, stream_seed};
pub use spaces::{ChannelLayout, IntTensor, ObsBatch, Observation, SensorSpec};
pub use task::{
    CurriculumFn, EpisodeResult, Mode, StepResult, Task, TaskSampler, TaskSamplerSpec,
};
