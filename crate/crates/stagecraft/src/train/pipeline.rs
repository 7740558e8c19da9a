//! Training pipelines: ordered stages, each with its own losses, step
//! budget, teacher-forcing schedule, and update geometry.
//!
//! A pipeline makes multi-phase training (say, behavioral cloning as a
//! warm-start followed by on-policy fine-tuning) a first-class, declarative
//! object: the trainer walks the stages in order, carrying model parameters
//! and optimizer state across the boundaries, while everything
//! stage-specific (losses, clip schedules, teacher forcing) stays strictly
//! local to its stage.

use std::path::PathBuf;

use crate::algo::{LossSpec, TeacherForcingSchedule, UpdateGeometry};
use crate::error::{Error, Result};
use crate::optim::AdamConfig;
use crate::tensor::Scalar;

/// Demonstration-dataset side channel for a stage: interleaves supervised
/// updates from stored expert trajectories with the on-policy updates.
#[derive(Debug, Clone)]
pub struct OffPolicyConfig {
    /// Demo dataset file written by the demo collector.
    pub demo_path: PathBuf,
    /// Supervised updates per on-policy update.
    pub interleave: usize,
    /// Parallel demo streams per supervised batch (the batch's width).
    pub streams: usize,
    /// Steps per stream per supervised batch (the batch's depth).
    pub steps: usize,
}

impl OffPolicyConfig {
    pub fn new(demo_path: PathBuf, streams: usize, steps: usize) -> Self {
        Self { demo_path, interleave: 1, streams, steps }
    }

    fn validate(&self) -> Result<()> {
        if self.interleave == 0 || self.streams == 0 || self.steps == 0 {
            return Err(Error::Config(
                "off-policy source: interleave, streams, and steps must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One phase of training.
#[derive(Debug, Clone)]
pub struct PipelineStage<F: Scalar> {
    /// Human-readable stage tag used in metrics and logs.
    pub name: String,
    /// Weighted losses evaluated in this stage (and only in it).
    pub losses: Vec<LossSpec<F>>,
    /// Stage budget in environment steps summed over samplers and agents.
    pub max_stage_steps: u64,
    /// Probability schedule for executing the expert's action instead of the
    /// policy's during collection; `None` disables teacher forcing.
    pub teacher_forcing: Option<TeacherForcingSchedule>,
    /// Rollout and minibatch geometry for this stage's updates.
    pub geometry: UpdateGeometry,
    /// Optional demonstration dataset to interleave with on-policy updates.
    pub off_policy: Option<OffPolicyConfig>,
}

impl<F: Scalar> PipelineStage<F> {
    pub fn new(name: &str, losses: Vec<LossSpec<F>>, max_stage_steps: u64, geometry: UpdateGeometry) -> Self {
        Self {
            name: name.to_string(),
            losses,
            max_stage_steps,
            teacher_forcing: None,
            geometry,
            off_policy: None,
        }
    }

    pub fn with_teacher_forcing(mut self, schedule: TeacherForcingSchedule) -> Self {
        self.teacher_forcing = Some(schedule);
        self
    }

    pub fn with_off_policy(mut self, source: OffPolicyConfig) -> Self {
        self.off_policy = Some(source);
        self
    }

    /// Environment steps contributed by one collect-update cycle of this
    /// stage on one worker, before scaling by the worker count.
    pub fn steps_per_collection(&self, num_agents: usize) -> u64 {
        self.geometry.steps_per_collection() * num_agents as u64
    }

    /// Whether collection must be able to query an expert during this stage
    /// (imitation labels or a teacher-forcing coin that can come up heads).
    pub fn needs_expert(&self) -> bool {
        self.losses.iter().any(|spec| spec.kind.needs_expert_actions())
            || self.teacher_forcing.as_ref().is_some_and(|tf| tf.start_prob > 0.0 || tf.end_prob > 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::Config("pipeline stage has an empty name".into()));
        }
        if self.losses.is_empty() {
            return Err(Error::Config(format!("stage '{}' has no losses", self.name)));
        }
        for spec in &self.losses {
            spec.validate()?;
        }
        if self.max_stage_steps == 0 {
            return Err(Error::Config(format!("stage '{}': step budget must be positive", self.name)));
        }
        self.geometry.validate()?;
        if let Some(tf) = &self.teacher_forcing {
            tf.validate()?;
        }
        if let Some(op) = &self.off_policy {
            op.validate()?;
        }
        // Advantage actor-critic is a strictly on-policy, single-update
        // method; several epochs or minibatches would re-use stale data.
        let has_a2c = self.losses.iter().any(|s| matches!(s.kind, crate::algo::LossKind::A2c(_)));
        if has_a2c && (self.geometry.epochs != 1 || self.geometry.minibatches != 1) {
            return Err(Error::Config(format!(
                "stage '{}': a2c requires exactly 1 epoch and 1 minibatch per collection, got {} and {}",
                self.name, self.geometry.epochs, self.geometry.minibatches
            )));
        }
        Ok(())
    }
}

/// The full training schedule: stages in execution order plus everything
/// shared across them (optimizer, checkpoint cadence).
#[derive(Debug, Clone)]
pub struct TrainingPipeline<F: Scalar> {
    pub stages: Vec<PipelineStage<F>>,
    pub optimizer: AdamConfig,
    /// Write a checkpoint every this many global steps (in addition to the
    /// stage boundaries, which always checkpoint). `None` = boundaries only.
    pub checkpoint_every: Option<u64>,
}

impl<F: Scalar> TrainingPipeline<F> {
    pub fn new(stages: Vec<PipelineStage<F>>, optimizer: AdamConfig) -> Self {
        Self { stages, optimizer, checkpoint_every: None }
    }

    /// Inserts a stage at the front — the one-line edit that turns a plain
    /// RL config into a warm-started IL→RL config.
    pub fn prepend_stage(mut self, stage: PipelineStage<F>) -> Self {
        self.stages.insert(0, stage);
        self
    }

    /// Sum of stage budgets: the run's total environment steps.
    pub fn total_steps(&self) -> u64 {
        self.stages.iter().map(|s| s.max_stage_steps).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::Config("pipeline has no stages".into()));
        }
        for stage in &self.stages {
            stage.validate()?;
        }
        self.optimizer.validate()?;
        if self.checkpoint_every == Some(0) {
            return Err(Error::Config("checkpoint cadence must be positive".into()));
        }
        Ok(())
    }
}
