//! Experiment definitions.
//!
//! An experiment is code, not a config file: a named bundle of builders for
//! the model and the task samplers, a training pipeline, machine layout, and
//! an evaluation protocol. Everything a run needs hangs off one
//! [`ExperimentConfig`], and [`ExperimentConfig::validate`] proves the parts
//! agree (observation spaces, action counts, expert availability) before a
//! single training step runs.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::framework::model::ActorCriticModel;
use crate::framework::rng::stream_seed;
use crate::framework::task::{Mode, Task, TaskSampler, TaskSamplerSpec};
use crate::tensor::{Graph, Scalar};
use crate::train::TrainingPipeline;

/// Process and sampler layout for a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MachineParams {
    /// Cooperating worker processes (gradient-averaged); 1 = single process.
    pub num_workers: usize,
    /// Task samplers driven by each worker.
    pub samplers_per_worker: usize,
}

impl Default for MachineParams {
    fn default() -> Self {
        Self { num_workers: 1, samplers_per_worker: 1 }
    }
}

/// How test-set evaluation is run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalProtocol {
    /// Episodes per evaluation pass.
    pub episodes: usize,
    /// Greedy (argmax) action selection; sampling otherwise. Greedy keeps
    /// reported numbers deterministic for a given seed.
    pub greedy: bool,
}

impl Default for EvalProtocol {
    fn default() -> Self {
        Self { episodes: 100, greedy: true }
    }
}

/// Builder for the model: receives the graph to register parameters in and
/// a derived initialization seed.
pub type ModelBuilder<F> =
    Arc<dyn Fn(&mut Graph<F>, u64) -> Box<dyn ActorCriticModel<F>> + Send + Sync>;

/// Builder for a task sampler from a fully-derived spec (seed already
/// stream-split per mode and sampler index).
pub type SamplerBuilder = Arc<dyn Fn(&TaskSamplerSpec) -> Box<dyn TaskSampler> + Send + Sync>;

/// A complete, runnable experiment definition.
#[derive(Clone)]
pub struct ExperimentConfig<F: Scalar> {
    pub name: String,
    /// Base seed; every RNG stream in the run derives from it.
    pub seed: u64,
    pub build_model: ModelBuilder<F>,
    pub build_sampler: SamplerBuilder,
    pub pipeline: TrainingPipeline<F>,
    pub machine: MachineParams,
    pub eval: EvalProtocol,
}

impl<F: Scalar> fmt::Debug for ExperimentConfig<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExperimentConfig")
            .field("name", &self.name)
            .field("seed", &self.seed)
            .field("stages", &self.pipeline.stages.len())
            .field("machine", &self.machine)
            .field("eval", &self.eval)
            .finish()
    }
}

impl<F: Scalar> ExperimentConfig<F> {
    /// Seed for the model-parameter initialization stream.
    pub fn model_seed(&self) -> u64 {
        stream_seed(self.seed, "model-init", 0)
    }

    /// Sampler spec for the given mode and global sampler index. Training
    /// samplers are unbounded; evaluation callers add `max_tasks`.
    pub fn sampler_spec(&self, mode: Mode, global_index: u64) -> TaskSamplerSpec {
        TaskSamplerSpec::new(
            stream_seed(self.seed, &format!("sampler/{}", mode.tag()), global_index),
            mode,
        )
    }

    /// Builds a throwaway task for schema inspection.
    pub fn probe_task(&self) -> Result<Box<dyn Task>> {
        let spec = self.sampler_spec(Mode::Train, 0);
        let mut sampler = (self.build_sampler)(&spec);
        sampler.next_task().ok_or_else(|| {
            Error::Config(format!("experiment '{}': train sampler produced no task", self.name))
        })
    }

    /// Proves the parts of this experiment agree before any training:
    /// model/task space agreement, pipeline well-formedness, expert
    /// availability for stages that need one, machine layout consistency.
    pub fn validate(&self) -> Result<()> {
        self.pipeline.validate()?;
        if self.machine.num_workers == 0 || self.machine.samplers_per_worker == 0 {
            return Err(Error::Config(format!(
                "experiment '{}': machine parameters must be positive, got {:?}",
                self.name, self.machine
            )));
        }
        if self.eval.episodes == 0 {
            return Err(Error::Config(format!(
                "experiment '{}': evaluation needs at least one episode",
                self.name
            )));
        }

        let mut scratch: Graph<F> = Graph::new();
        let model = (self.build_model)(&mut scratch, self.model_seed());
        let task = self.probe_task()?;

        if model.action_count() != task.action_count() {
            return Err(Error::Config(format!(
                "experiment '{}': model emits {} actions but the task defines {}",
                self.name,
                model.action_count(),
                task.action_count()
            )));
        }
        if model.num_agents() != task.num_agents() {
            return Err(Error::Config(format!(
                "experiment '{}': model drives {} agents but the task has {}",
                self.name,
                model.num_agents(),
                task.num_agents()
            )));
        }

        let offered = task.observation_specs();
        for want in model.consumed_sensors() {
            match offered.iter().find(|s| s.id == want.id) {
                None => {
                    let available: Vec<&str> = offered.iter().map(|s| s.id.as_str()).collect();
                    return Err(Error::Config(format!(
                        "experiment '{}': model consumes sensor '{}' but the task offers only [{}]",
                        self.name,
                        want.id,
                        available.join(", ")
                    )));
                }
                Some(have) if *have != want => {
                    return Err(Error::Config(format!(
                        "experiment '{}': sensor '{}' mismatch — task produces shape {:?} layout {:?}, model expects shape {:?} layout {:?}",
                        self.name, want.id, have.shape, have.layout, want.shape, want.layout
                    )));
                }
                Some(_) => {}
            }
        }

        for stage in &self.pipeline.stages {
            if stage.geometry.num_samplers != self.machine.samplers_per_worker {
                return Err(Error::Config(format!(
                    "experiment '{}': stage '{}' wants {} samplers per worker but the machine allocates {}",
                    self.name, stage.name, stage.geometry.num_samplers, self.machine.samplers_per_worker
                )));
            }
            if stage.needs_expert() && !task.provides_expert() {
                return Err(Error::Config(format!(
                    "experiment '{}': stage '{}' needs an expert but the task provides none",
                    self.name, stage.name
                )));
            }
        }
        Ok(())
    }
}
