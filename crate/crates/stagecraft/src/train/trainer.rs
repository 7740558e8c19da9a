//! The training loop: drives an experiment's pipeline end to end.
//!
//! One trainer owns everything a worker process needs: the graph with the
//! model's parameters, the optimizer, the collection state (samplers, tasks,
//! action streams), and — when a stage reads demonstrations — a demo
//! batcher. [`Trainer::run`] walks the pipeline's stages in order; each
//! *cycle* collects one rollout window under the current stage's
//! teacher-forcing schedule, estimates advantages once, then applies the
//! stage's `epochs × minibatches` gradient updates, optionally interleaving
//! supervised updates from the demo dataset after each one.
//!
//! Multi-worker runs attach a [`Collective`]: every worker executes the same
//! loop on its own sampler shard (global sampler index = `rank ·
//! samplers_per_worker + local`), and each update's gradients are averaged
//! across the group before the optimizer applies them, so all workers hold
//! identical parameters at every step. One collection cycle then advances
//! the global step counter by `workers · samplers · rollout · agents`.
//!
//! Checkpoints are written at every stage boundary and, optionally, on a
//! global-step cadence; they capture parameters, optimizer moments, and the
//! collection/replay positions, so a resumed run continues bit-for-bit where
//! the original left off. A numerical failure (non-finite loss or logits)
//! halts training with an error naming the last good checkpoint.
//!
//! One [`MetricsRecord`] is emitted per optimizer update, its global step
//! interpolated across the cycle so records remain strictly ordered;
//! episode statistics attach to the cycle's final record. Only workers given
//! an output directory write files — in a group, that is rank 0.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use crate::algo::{
    combine_losses, gae_compute, normalize_advantages, LossCtx, LossInputs, LossKind, LossSpec,
    ModelSeqOut, UpdateGeometry,
};
use crate::demos::{DemoBatcher, DemoDataset};
use crate::dist::Collective;
use crate::error::{Error, Result};
use crate::framework::experiment::ExperimentConfig;
use crate::framework::model::ActorCriticModel;
use crate::framework::rng::stream_seed;
use crate::framework::task::{Mode, TaskSampler};
use crate::metrics::{
    aggregate_episodes, EpisodeStats, MetricsRecord, MetricsWriter, OutputLayout,
};
use crate::optim::Adam;
use crate::tensor::{decode_params, encode_params, value_digest, Graph, Scalar, Tensor, Var};
use crate::train::checkpoint::Checkpoint;
use crate::train::collect::CollectState;
use crate::train::evaluate::{evaluate, EvalReport};
use crate::train::pipeline::TrainingPipeline;

/// Knobs that belong to the process, not the experiment.
#[derive(Debug, Clone)]
pub struct TrainerOptions {
    /// Run directory for metrics and checkpoints; `None` writes nothing.
    pub out_dir: Option<PathBuf>,
    /// This worker's rank in `0..num_workers`.
    pub rank: usize,
    /// Keep emitted metrics records in memory for [`Trainer::drain_records`].
    /// Disable for long runs that only need the on-disk streams.
    pub keep_records: bool,
}

impl Default for TrainerOptions {
    fn default() -> Self {
        Self { out_dir: None, rank: 0, keep_records: true }
    }
}

/// A demo dataset being replayed through the model: the batcher's position
/// plus the recurrent state carried between consecutive batches.
struct DemoReplay<F: Scalar> {
    batcher: DemoBatcher<F>,
    state: Tensor<F>,
}

/// A worker's training loop over one experiment.
pub struct Trainer<F: Scalar> {
    config: ExperimentConfig<F>,
    g: Graph<F>,
    model: Box<dyn ActorCriticModel<F>>,
    /// The model's parameters in registration order; defines the layout of
    /// checkpoints and gradient payloads.
    named: Vec<(String, Var)>,
    adam: Adam<F>,
    collect: CollectState<F>,
    demo: Option<DemoReplay<F>>,
    collective: Option<Box<dyn Collective<F>>>,
    world: usize,
    rank: usize,
    /// Environment steps consumed so far, summed over workers, samplers, and
    /// agents.
    global_step: u64,
    stage_index: usize,
    stage_step: u64,
    layout: OutputLayout,
    out_dir: Option<PathBuf>,
    metrics: Option<MetricsWriter>,
    keep_records: bool,
    records: Vec<MetricsRecord>,
    last_checkpoint: Option<PathBuf>,
    started: Instant,
}

impl<F: Scalar> Trainer<F> {
    /// Builds a trainer at the start of the pipeline.
    pub fn new(config: ExperimentConfig<F>, options: TrainerOptions) -> Result<Self> {
        let mut trainer = Self::build(config, options)?;
        trainer.enter_stage(0)?;
        Ok(trainer)
    }

    /// Builds a trainer positioned where `path`'s checkpoint left off:
    /// parameters, optimizer moments, step counters, and collection/replay
    /// positions all restored, so the next cycle reproduces exactly what an
    /// uninterrupted run would have done.
    pub fn restore(
        config: ExperimentConfig<F>,
        options: TrainerOptions,
        path: &Path,
    ) -> Result<Self> {
        let ckpt = Checkpoint::<F>::load(path)?;
        let mut trainer = Self::build(config, options)?;
        trainer.global_step = ckpt.global_step;
        trainer.stage_index = ckpt.stage_index;
        trainer.stage_step = ckpt.stage_step;
        ckpt.restore_model(&mut trainer.g, &trainer.named)?;
        ckpt.restore_optimizer(&mut trainer.adam)?;
        match &ckpt.collect {
            Some(state) => trainer.collect.restore_state(state)?,
            None => {
                return Err(Error::Checkpoint(
                    "checkpoint stores no collection state; it cannot seed a training run".into(),
                ))
            }
        }
        if trainer.stage_index < trainer.config.pipeline.stages.len() {
            trainer.enter_stage(trainer.stage_index)?;
        }
        match (&mut trainer.demo, &ckpt.demo_batcher) {
            (Some(replay), Some(state)) => Self::restore_demo(replay, state)?,
            (None, Some(_)) => {
                return Err(Error::Checkpoint(
                    "checkpoint carries demo-replay state but the current stage reads no demos"
                        .into(),
                ))
            }
            (Some(_), None) => {
                return Err(Error::Checkpoint(
                    "the current stage reads demos but the checkpoint has no replay state".into(),
                ))
            }
            (None, None) => {}
        }
        Ok(trainer)
    }

    fn build(config: ExperimentConfig<F>, options: TrainerOptions) -> Result<Self> {
        config.validate()?;
        let world = config.machine.num_workers;
        if options.rank >= world {
            return Err(Error::Config(format!(
                "rank {} is out of range for a run of {} workers",
                options.rank, world
            )));
        }

        let mut g: Graph<F> = Graph::new();
        let model = (config.build_model)(&mut g, config.model_seed());
        let named = model.named_params();
        assert_eq!(
            g.param_vars(),
            named.iter().map(|(_, v)| *v).collect::<Vec<_>>(),
            "the model's named parameters must cover the graph's parameters in registration order"
        );
        let adam = Adam::new(config.pipeline.optimizer.clone(), &g)?;

        let per_worker = config.machine.samplers_per_worker;
        let first_global = (options.rank * per_worker) as u64;
        let samplers: Vec<Box<dyn TaskSampler>> = (0..per_worker)
            .map(|i| (config.build_sampler)(&config.sampler_spec(Mode::Train, first_global + i as u64)))
            .collect();
        let collect = CollectState::new(samplers, model.as_ref(), config.seed, first_global)?;

        let layout = OutputLayout::default();
        let metrics = match &options.out_dir {
            Some(dir) => Some(MetricsWriter::create(
                dir,
                &layout,
                &loss_columns(&config.pipeline),
                model.num_agents(),
            )?),
            None => None,
        };

        Ok(Self {
            config,
            g,
            model,
            named,
            adam,
            collect,
            demo: None,
            collective: None,
            world,
            rank: options.rank,
            global_step: 0,
            stage_index: 0,
            stage_step: 0,
            layout,
            out_dir: options.out_dir,
            metrics,
            keep_records: options.keep_records,
            records: Vec::new(),
            last_checkpoint: None,
            started: Instant::now(),
        })
    }

    /// Wires in the gradient-averaging group. Must happen before the first
    /// cycle of a multi-worker run; the group's size and rank must match the
    /// experiment's machine layout.
    pub fn attach_collective(&mut self, collective: Box<dyn Collective<F>>) {
        assert_eq!(
            collective.world_size(),
            self.world,
            "collective has {} workers, the experiment declares {}",
            collective.world_size(),
            self.world
        );
        assert_eq!(
            collective.rank(),
            self.rank,
            "collective assigned rank {}, the trainer was built as rank {}",
            collective.rank(),
            self.rank
        );
        self.collective = Some(collective);
    }

    /// Current parameters in the interchange encoding (group joins,
    /// broadcasts).
    pub fn params_blob(&self) -> Vec<u8> {
        let refs: Vec<(String, &Tensor<F>)> =
            self.named.iter().map(|(n, v)| (n.clone(), self.g.value(*v))).collect();
        encode_params(&refs)
    }

    /// Overwrites the parameters from an interchange blob (the group's
    /// agreed starting point). Names and shapes must match the model.
    pub fn load_params_blob(&mut self, blob: &[u8]) -> Result<()> {
        let decoded = decode_params::<F>(blob)?;
        if decoded.len() != self.named.len() {
            return Err(Error::Checkpoint(format!(
                "parameter blob holds {} parameters, the model declares {}",
                decoded.len(),
                self.named.len()
            )));
        }
        for ((blob_name, tensor), (name, var)) in decoded.iter().zip(&self.named) {
            if blob_name != name {
                return Err(Error::Checkpoint(format!(
                    "blob parameter '{blob_name}' does not match the model's '{name}'"
                )));
            }
            if tensor.shape() != self.g.value(*var).shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter '{name}' has shape {:?} in the blob but {:?} in the model",
                    tensor.shape(),
                    self.g.value(*var).shape()
                )));
            }
            self.g.param_data_mut(*var).copy_from_slice(tensor.data());
        }
        Ok(())
    }

    pub fn global_step(&self) -> u64 {
        self.global_step
    }

    pub fn stage_index(&self) -> usize {
        self.stage_index
    }

    pub fn stage_step(&self) -> u64 {
        self.stage_step
    }

    /// Whether every stage has consumed its budget.
    pub fn finished(&self) -> bool {
        self.stage_index >= self.config.pipeline.stages.len()
    }

    /// Path of the checkpoint written most recently by this trainer.
    pub fn last_checkpoint(&self) -> Option<&Path> {
        self.last_checkpoint.as_deref()
    }

    /// Named copies of the current parameter values.
    pub fn params_snapshot(&self) -> Vec<(String, Tensor<F>)> {
        self.named.iter().map(|(n, v)| (n.clone(), self.g.value(*v).clone())).collect()
    }

    /// Metrics records emitted since the last drain (when retention is on).
    pub fn drain_records(&mut self) -> Vec<MetricsRecord> {
        std::mem::take(&mut self.records)
    }

    /// Runs the pipeline to completion.
    pub fn run(&mut self) -> Result<()> {
        while !self.finished() {
            self.run_cycle()?;
        }
        self.flush()
    }

    /// Runs whole cycles until the global step reaches `target` (or the
    /// pipeline ends). Steps only advance in collection-sized increments, so
    /// the final count may overshoot the target by part of one cycle.
    pub fn run_until(&mut self, target: u64) -> Result<()> {
        while !self.finished() && self.global_step < target {
            self.run_cycle()?;
        }
        self.flush()
    }

    fn flush(&mut self) -> Result<()> {
        if let Some(writer) = &mut self.metrics {
            writer.flush()?;
        }
        Ok(())
    }

    /// Evaluates the current policy over the experiment's protocol on a
    /// fresh sampler for `mode`. Training state is untouched: evaluation
    /// builds its own sampler and RNG streams, and parameters are read-only.
    pub fn evaluate(&mut self, mode: Mode) -> Result<EvalReport> {
        let spec = self.config.sampler_spec(mode, 0).with_max_tasks(self.config.eval.episodes);
        let mut sampler = (self.config.build_sampler)(&spec);
        evaluate(
            &mut self.g,
            self.model.as_ref(),
            sampler.as_mut(),
            self.config.eval.episodes,
            self.config.eval.greedy,
            self.config.seed,
        )
    }

    /// One collect-and-update cycle of the current stage. Advances the step
    /// counters, emits one metrics record per update, and handles stage
    /// boundaries and checkpoints.
    pub fn run_cycle(&mut self) -> Result<()> {
        assert!(!self.finished(), "run_cycle called after the pipeline completed");
        if self.world > 1 {
            assert!(
                self.collective.is_some(),
                "a {}-worker run must attach its collective before training",
                self.world
            );
        }
        let stage = self.config.pipeline.stages[self.stage_index].clone();
        let cycle_stage = self.stage_index;
        let cycle_started = Instant::now();

        let tf_prob = stage.teacher_forcing.as_ref().map(|tf| tf.probability(self.stage_step));
        let geometry: UpdateGeometry = stage.geometry;
        let buffer = match self.collect.collect(
            &mut self.g,
            self.model.as_ref(),
            geometry.rollout_len,
            tf_prob,
        ) {
            Ok(buffer) => buffer,
            Err(err @ Error::Numeric(_)) => return Err(self.numeric_halt(err)),
            Err(err) => return Err(err),
        };

        // Advantage targets are shared by every update of the cycle; the
        // first advantage-consuming loss defines the estimator. Stages
        // without one (pure imitation) train on zero targets.
        let gae = stage.losses.iter().find_map(|spec| spec.kind.gae_params());
        let (advantages, returns, normalize) = match gae {
            Some((gamma, lambda, normalize)) => {
                let (a, r) = gae_compute(
                    &buffer.rewards,
                    &buffer.values,
                    &buffer.bootstrap_values,
                    &buffer.masks,
                    buffer.t_len,
                    buffer.rows(),
                    gamma,
                    lambda,
                );
                (a, r, normalize)
            }
            None => {
                let zeros = vec![F::zero(); buffer.total_rows()];
                (zeros.clone(), zeros, false)
            }
        };

        let updates = (geometry.epochs * geometry.minibatches) as u64;
        let delta = self.world as u64 * stage.steps_per_collection(self.model.num_agents());
        let ctx = LossCtx { stage_step: self.stage_step, stage_horizon: stage.max_stage_steps };

        let mut pending: Vec<(u64, Vec<(String, f64)>, EpisodeStats)> = Vec::new();
        let mut emitted = 0u64;
        for _epoch in 0..geometry.epochs {
            for slot in 0..geometry.minibatches {
                let rows = buffer.minibatch_rows(geometry.minibatches, slot);
                let mut mb = buffer.minibatch(&rows, &advantages, &returns);
                if normalize {
                    normalize_advantages(&mut mb.advantages);
                }

                self.g.reset();
                let seq =
                    self.model.forward_seq(&mut self.g, &mb.obs_seq, &mb.initial_state, &mb.masks);
                let log_probs = self.g.log_softmax(seq.logits);
                let out = ModelSeqOut { log_probs, values: seq.values };
                let inputs = LossInputs {
                    actions: &mb.actions,
                    old_log_probs: &mb.behavior_log_probs,
                    advantages: &mb.advantages,
                    returns: &mb.returns,
                    expert_actions: mb.expert_actions.as_deref(),
                    weights: None,
                };
                let (total, mut diagnostics) =
                    match combine_losses(&mut self.g, &stage.losses, &out, &inputs, &ctx) {
                        Ok(pair) => pair,
                        Err(err @ Error::Numeric(_)) => return Err(self.numeric_halt(err)),
                        Err(err) => return Err(err),
                    };
                self.g.backward(total);
                self.allreduce_grads()?;
                let lr = self.adam.step(&mut self.g, self.global_step);
                diagnostics.push(("optim/lr".to_string(), lr));

                if let Some(source) = &stage.off_policy {
                    let mut folded: Vec<(String, f64)> = Vec::new();
                    for _ in 0..source.interleave {
                        let demo_diag = match self.demo_update(&ctx) {
                            Ok(d) => d,
                            Err(err @ Error::Numeric(_)) => return Err(self.numeric_halt(err)),
                            Err(err) => return Err(err),
                        };
                        for (key, value) in demo_diag {
                            match folded.iter_mut().find(|(k, _)| *k == key) {
                                Some(slot) => slot.1 += value,
                                None => folded.push((key, value)),
                            }
                        }
                    }
                    let scale = 1.0 / source.interleave as f64;
                    diagnostics.extend(
                        folded.into_iter().map(|(k, v)| (format!("offpolicy/{k}"), v * scale)),
                    );
                }

                emitted += 1;
                let step_after = self.global_step + delta * emitted / updates;
                let stats = if emitted == updates {
                    aggregate_episodes(&self.collect.drain_episodes())
                } else {
                    aggregate_episodes(&[])
                };
                pending.push((step_after, diagnostics, stats));
            }
        }

        self.stage_step += delta;
        self.global_step += delta;

        let elapsed = cycle_started.elapsed().as_secs_f64().max(1e-9);
        let steps_per_second = delta as f64 / elapsed;
        let wall_clock_s = self.started.elapsed().as_secs_f64();
        for (step, losses, stats) in pending {
            self.emit(MetricsRecord {
                global_step: step,
                stage_index: cycle_stage,
                losses,
                episodes: stats.episodes,
                success_rate: stats.success_rate,
                mean_reward: stats.mean_reward,
                total_reward: stats.total_reward,
                mean_length: stats.mean_length,
                mean_spl: stats.mean_spl,
                extras: stats.extras,
                wall_clock_s,
                steps_per_second,
            })?;
        }

        let crossed_cadence = self.config.pipeline.checkpoint_every.is_some_and(|every| {
            (self.global_step / every) > ((self.global_step - delta) / every)
        });
        let stage_done = self.stage_step >= stage.max_stage_steps;
        if stage_done {
            self.stage_index += 1;
            self.stage_step = 0;
            if self.stage_index < self.config.pipeline.stages.len() {
                self.enter_stage(self.stage_index)?;
            } else {
                self.demo = None;
            }
        }
        if stage_done || crossed_cadence {
            self.write_checkpoint()?;
        }
        Ok(())
    }

    /// Prepares stage-scoped machinery: the demo replay when the stage reads
    /// demonstrations. Collection state persists across stages.
    fn enter_stage(&mut self, index: usize) -> Result<()> {
        self.demo = None;
        let stage = &self.config.pipeline.stages[index];
        if let Some(source) = &stage.off_policy {
            let dataset = Arc::new(DemoDataset::load(&source.demo_path)?);
            if dataset.action_count() != self.model.action_count() {
                return Err(Error::Config(format!(
                    "stage '{}': demo dataset records {} actions, the model emits {}",
                    stage.name,
                    dataset.action_count(),
                    self.model.action_count()
                )));
            }
            for want in self.model.consumed_sensors() {
                match dataset.sensors().iter().find(|s| s.id == want.id) {
                    None => {
                        return Err(Error::Config(format!(
                            "stage '{}': the model consumes sensor '{}' but the demo dataset lacks it",
                            stage.name, want.id
                        )))
                    }
                    Some(have) if *have != want => {
                        return Err(Error::Config(format!(
                            "stage '{}': sensor '{}' recorded with shape {:?} layout {:?}, model expects shape {:?} layout {:?}",
                            stage.name, want.id, have.shape, have.layout, want.shape, want.layout
                        )))
                    }
                    Some(_) => {}
                }
            }
            // Each rank replays the dataset in its own order; supervised
            // gradients are still averaged across the group.
            let seed = stream_seed(self.config.seed, "demos", self.rank as u64);
            let batcher = DemoBatcher::new(dataset, source.streams, source.steps, seed);
            let state = self.model.initial_state(source.streams);
            self.demo = Some(DemoReplay { batcher, state });
        }
        Ok(())
    }

    /// One supervised update from the demo dataset: behavioral cloning on
    /// the next replay batch, gradients averaged like any other update. The
    /// recurrent state carries across batches so trajectories longer than
    /// the batch depth replay exactly.
    fn demo_update(&mut self, ctx: &LossCtx) -> Result<Vec<(String, f64)>> {
        let replay = self.demo.as_mut().expect("demo_update requires an off-policy stage");
        let batch = replay.batcher.next_batch();
        let carried = replay.state.clone();

        self.g.reset();
        let seq = self.model.forward_seq(&mut self.g, &batch.obs_seq, &carried, &batch.masks);
        let log_probs = self.g.log_softmax(seq.logits);
        let out = ModelSeqOut { log_probs, values: seq.values };
        let zeros = vec![F::zero(); batch.expert_actions.len()];
        let inputs = LossInputs {
            actions: &batch.expert_actions,
            old_log_probs: &zeros,
            advantages: &zeros,
            returns: &zeros,
            expert_actions: Some(&batch.expert_actions),
            weights: Some(&batch.weights),
        };
        let specs = [LossSpec::new(LossKind::Bc, 1.0)];
        let (total, diagnostics) = combine_losses(&mut self.g, &specs, &out, &inputs, ctx)?;
        self.g.backward(total);
        self.allreduce_grads()?;
        self.adam.step(&mut self.g, self.global_step);

        let next_state = self.g.value(seq.final_state).clone();
        self.demo.as_mut().expect("replay persists across the update").state = next_state;
        Ok(diagnostics)
    }

    /// Averages the current gradients across the worker group (no-op without
    /// a collective). Parameters that received no gradient contribute zeros,
    /// which under Adam updates identically to a missing gradient.
    fn allreduce_grads(&mut self) -> Result<()> {
        let Some(collective) = self.collective.as_mut() else {
            return Ok(());
        };
        let mut flat: Vec<F> = Vec::new();
        for (_, var) in &self.named {
            match self.g.grad_opt(*var) {
                Some(grad) => flat.extend_from_slice(grad),
                None => flat.extend(std::iter::repeat(F::zero()).take(self.g.value(*var).numel())),
            }
        }
        let digest = collective.verification_due().then(|| {
            let snapshot: Vec<(String, Tensor<F>)> =
                self.named.iter().map(|(n, v)| (n.clone(), self.g.value(*v).clone())).collect();
            value_digest(&snapshot)
        });
        collective.allreduce_mean(&mut flat, digest)?;
        let mut offset = 0;
        for (_, var) in &self.named {
            let numel = self.g.value(*var).numel();
            self.g.set_grad(*var, &flat[offset..offset + numel]);
            offset += numel;
        }
        Ok(())
    }

    /// Wraps a non-finite failure with recovery guidance and takes the
    /// worker group down (a NaN on one worker poisons everyone's mean).
    fn numeric_halt(&mut self, err: Error) -> Error {
        let anchor = match &self.last_checkpoint {
            Some(path) => path.display().to_string(),
            None => "none".to_string(),
        };
        let message = format!("{err}; training halted — last good checkpoint: {anchor}");
        if let Some(collective) = &mut self.collective {
            collective.abort(&message);
        }
        Error::Numeric(message)
    }

    fn emit(&mut self, record: MetricsRecord) -> Result<()> {
        if let Some(writer) = &mut self.metrics {
            writer.write(&record)?;
        }
        if self.keep_records {
            self.records.push(record);
        }
        Ok(())
    }

    /// Writes a checkpoint under `<out_dir>/checkpoints/` (and refreshes
    /// `latest.ckpt`); a no-op for workers without an output directory.
    fn write_checkpoint(&mut self) -> Result<()> {
        let Some(dir) = self.out_dir.clone() else {
            return Ok(());
        };
        let mut ckpt = Checkpoint::capture(
            &self.g,
            &self.named,
            &self.adam,
            self.global_step,
            self.stage_index,
            self.stage_step,
        );
        ckpt.collect = Some(self.collect.save_state());
        ckpt.demo_batcher = self.demo.as_ref().map(Self::demo_snapshot);

        let ckpt_dir = dir.join(&self.layout.checkpoints_dir);
        fs::create_dir_all(&ckpt_dir)?;
        let path = ckpt_dir.join(format!("step_{:012}.ckpt", self.global_step));
        ckpt.save(&path)?;
        fs::copy(&path, ckpt_dir.join("latest.ckpt"))?;
        self.last_checkpoint = Some(path);
        self.flush()
    }

    fn demo_snapshot(replay: &DemoReplay<F>) -> serde_json::Value {
        serde_json::json!({
            "batcher": replay.batcher.save_state(),
            "carry_shape": replay.state.shape(),
            "carry": replay.state.data().iter().map(|&v| v.to_f64()).collect::<Vec<f64>>(),
        })
    }

    fn restore_demo(replay: &mut DemoReplay<F>, state: &serde_json::Value) -> Result<()> {
        let batcher = state
            .get("batcher")
            .ok_or_else(|| Error::Checkpoint("demo-replay state lacks a batcher position".into()))?;
        replay.batcher.restore_state(batcher)?;
        let shape: Vec<usize> = serde_json::from_value(state["carry_shape"].clone())
            .map_err(|e| Error::Checkpoint(format!("demo-replay carry shape does not parse: {e}")))?;
        let carry: Vec<f64> = serde_json::from_value(state["carry"].clone())
            .map_err(|e| Error::Checkpoint(format!("demo-replay carry does not parse: {e}")))?;
        if shape != replay.state.shape() {
            return Err(Error::Checkpoint(format!(
                "demo-replay carry has shape {:?}, this stage replays {:?}",
                shape,
                replay.state.shape()
            )));
        }
        replay.state = Tensor::new(&shape, carry.into_iter().map(F::from_f64).collect());
        Ok(())
    }
}

/// Columns the tabular metrics stream declares up front: the total, every
/// stage loss's diagnostics in pipeline order, interleaved-update
/// diagnostics where a stage reads demos, and the applied learning rate.
fn loss_columns<F: Scalar>(pipeline: &TrainingPipeline<F>) -> Vec<String> {
    let mut columns = vec!["loss/total".to_string()];
    let mut push = |columns: &mut Vec<String>, key: String| {
        if !columns.contains(&key) {
            columns.push(key);
        }
    };
    for stage in &pipeline.stages {
        for spec in &stage.losses {
            for key in spec.kind.diagnostic_keys() {
                push(&mut columns, key);
            }
        }
        if stage.off_policy.is_some() {
            for key in ["offpolicy/loss/total", "offpolicy/loss/bc", "offpolicy/bc/nll"] {
                push(&mut columns, key.to_string());
            }
        }
    }
    columns.push("optim/lr".to_string());
    columns
}
