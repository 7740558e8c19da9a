//! Synchronous vectorized rollout collection.
//!
//! A [`CollectState`] owns a vector of task samplers, their live tasks, and
//! everything that persists between collection windows: the recurrent state
//! per batch row, the continuation masks, and one action-sampling stream per
//! sampler. Each call to [`CollectState::collect`] advances every task
//! `t_len` steps under the current policy and returns the window as a
//! [`RolloutBuffer`].
//!
//! Sampling streams are derived per *global* sampler index, so a run split
//! across several workers draws exactly the same actions for a given sampler
//! as the equivalent single-worker run — the property behind gradient-level
//! equivalence of distributed and local training.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::framework::model::ActorCriticModel;
use crate::framework::rng::rng_from;
use crate::framework::spaces::{ObsBatch, Observation};
use crate::framework::task::{EpisodeResult, Task, TaskSampler};
use crate::nn::Categorical;
use crate::tensor::{Graph, Scalar, Tensor};
use crate::train::buffer::RolloutBuffer;

/// Inverse-CDF draw over one row of normalized log-probabilities,
/// accumulated in `f64` so the chosen action is precision-independent
/// (mirrors [`Categorical::sample`], but with the uniform supplied by the
/// caller for per-sampler stream control).
fn inverse_cdf<F: Scalar>(log_probs: &[F], u: f64) -> usize {
    let mut cum = 0.0f64;
    let mut pick = log_probs.len() - 1;
    for (a, &l) in log_probs.iter().enumerate() {
        cum += l.to_f64().exp();
        if u < cum {
            pick = a;
            break;
        }
    }
    pick
}

/// Serialized between-window position (tasks, samplers, streams, recurrent
/// state); completed-episode results are not part of it — they are drained
/// into metrics before checkpointing.
#[derive(Debug, Serialize, Deserialize)]
struct CollectSnapshot {
    samplers: Vec<serde_json::Value>,
    tasks: Vec<serde_json::Value>,
    rngs: Vec<ChaCha8Rng>,
    state: Vec<f64>,
    masks: Vec<f64>,
}

/// The persistent half of rollout collection: samplers, live tasks, carried
/// recurrent state, continuation masks, and per-sampler action streams.
pub struct CollectState<F: Scalar> {
    samplers: Vec<Box<dyn TaskSampler>>,
    tasks: Vec<Box<dyn Task>>,
    rngs: Vec<ChaCha8Rng>,
    num_agents: usize,
    /// Recurrent state after the last collected step, `[rows, H]`.
    state: Tensor<F>,
    /// Continuation mask for the next step, per row.
    masks: Vec<F>,
    episodes: Vec<EpisodeResult>,
}

impl<F: Scalar> CollectState<F> {
    /// Takes ownership of the samplers, draws each one's first task, and
    /// derives one action stream per sampler from the experiment seed and
    /// the sampler's global index (`first_global_index + local position`).
    pub fn new(
        mut samplers: Vec<Box<dyn TaskSampler>>,
        model: &dyn ActorCriticModel<F>,
        base_seed: u64,
        first_global_index: u64,
    ) -> Result<Self> {
        assert!(!samplers.is_empty(), "collection: need at least one sampler");
        let mut tasks = Vec::with_capacity(samplers.len());
        for (i, sampler) in samplers.iter_mut().enumerate() {
            let task = sampler
                .next_task()
                .ok_or_else(|| Error::Task(format!("sampler {i} provided no first task")))?;
            assert_eq!(
                task.num_agents(),
                model.num_agents(),
                "collection: task drives {} agents, model {}",
                task.num_agents(),
                model.num_agents()
            );
            assert_eq!(
                task.action_count(),
                model.action_count(),
                "collection: task defines {} actions, model emits {}",
                task.action_count(),
                model.action_count()
            );
            tasks.push(task);
        }
        let rngs = (0..samplers.len())
            .map(|i| rng_from(base_seed, "collect", first_global_index + i as u64))
            .collect();
        let num_agents = model.num_agents();
        let rows = samplers.len() * num_agents;
        Ok(Self {
            samplers,
            tasks,
            rngs,
            num_agents,
            state: model.initial_state(rows),
            masks: vec![F::zero(); rows],
            episodes: Vec::new(),
        })
    }

    pub fn num_samplers(&self) -> usize {
        self.samplers.len()
    }

    /// Batch rows (`samplers × agents`).
    pub fn rows(&self) -> usize {
        self.samplers.len() * self.num_agents
    }

    /// Hands over every episode completed since the last drain.
    pub fn drain_episodes(&mut self) -> Vec<EpisodeResult> {
        std::mem::take(&mut self.episodes)
    }

    fn stack_observations(&self) -> ObsBatch {
        let mut all: Vec<Observation> = Vec::with_capacity(self.rows());
        for task in &self.tasks {
            all.extend(task.observe());
        }
        let refs: Vec<&Observation> = all.iter().collect();
        ObsBatch::stack(&refs)
    }

    /// Collects one `t_len`-step window under the current policy.
    ///
    /// `tf_prob` is the stage's teacher-forcing probability: `None` when the
    /// stage has no schedule, `Some(p)` to execute the expert's action with
    /// probability `p` per sampler per step (one coin per sampler, shared by
    /// its agents). The policy's own draw is made either way, so action
    /// streams stay aligned as `p` decays.
    ///
    /// Expert labels are recorded whenever the task ships an expert,
    /// regardless of `tf_prob` — imitation losses and relabeling both read
    /// them from the buffer.
    pub fn collect(
        &mut self,
        g: &mut Graph<F>,
        model: &dyn ActorCriticModel<F>,
        t_len: usize,
        tf_prob: Option<f64>,
    ) -> Result<RolloutBuffer<F>> {
        assert!(t_len > 0, "collection: need at least one step per window");
        let w = self.samplers.len();
        let agents = self.num_agents;
        let rows = w * agents;
        let a_count = model.action_count();
        let record_expert = self.tasks[0].provides_expert();
        if tf_prob.is_some() && !record_expert {
            return Err(Error::Task(
                "teacher forcing requested but the task provides no expert".into(),
            ));
        }

        let initial_state = self.state.clone();
        let mut obs_seq = Vec::with_capacity(t_len);
        let mut actions = vec![0usize; t_len * rows];
        let mut behavior_log_probs = vec![F::zero(); t_len * rows];
        let mut values = vec![F::zero(); t_len * rows];
        let mut rewards = vec![F::zero(); t_len * rows];
        let mut masks = vec![F::zero(); t_len * rows];
        let mut expert_actions = record_expert.then(|| vec![0usize; t_len * rows]);

        for t in 0..t_len {
            g.reset();
            let batch = self.stack_observations();
            let state_var = g.constant(self.state.clone());
            let out = model.forward(g, &batch, state_var, &self.masks);
            let dist = Categorical::from_logits(g, out.logits)?;
            let log_probs = g.value(dist.log_probs()).data().to_vec();
            let step_values = g.value(out.values).data().to_vec();
            let next_state = g.value(out.next_state).clone();

            masks[t * rows..(t + 1) * rows].copy_from_slice(&self.masks);
            obs_seq.push(batch);

            for s in 0..w {
                let expert = if record_expert {
                    Some(self.tasks[s].expert_actions().ok_or_else(|| {
                        Error::Task(format!("task of sampler {s} stopped providing expert actions"))
                    })?)
                } else {
                    None
                };
                let forced = match tf_prob {
                    Some(p) => self.rngs[s].gen::<f64>() < p,
                    None => false,
                };
                let mut executed = Vec::with_capacity(agents);
                for a in 0..agents {
                    let r = s * agents + a;
                    let u: f64 = self.rngs[s].gen();
                    let sampled = inverse_cdf(&log_probs[r * a_count..(r + 1) * a_count], u);
                    executed.push(if forced { expert.as_ref().unwrap()[a] } else { sampled });
                }
                let result = self.tasks[s].step(&executed)?;
                for a in 0..agents {
                    let r = s * agents + a;
                    let i = t * rows + r;
                    actions[i] = executed[a];
                    behavior_log_probs[i] = log_probs[r * a_count + executed[a]];
                    values[i] = step_values[r];
                    rewards[i] = F::from_f64(result.rewards[a]);
                    if let (Some(store), Some(e)) = (expert_actions.as_mut(), expert.as_ref()) {
                        store[i] = e[a];
                    }
                }
                let continuation = if result.done {
                    self.episodes.push(self.tasks[s].episode_result());
                    self.tasks[s] = self.samplers[s].next_task().ok_or_else(|| {
                        Error::Task(format!(
                            "sampler {s} exhausted mid-collection after {} tasks",
                            self.samplers[s].total_sampled()
                        ))
                    })?;
                    F::zero()
                } else {
                    F::one()
                };
                for a in 0..agents {
                    self.masks[s * agents + a] = continuation;
                }
            }
            self.state = next_state;
        }

        // Value of the step just past the window, under the collecting
        // policy, pre-masked so ended episodes contribute no bootstrap.
        g.reset();
        let batch = self.stack_observations();
        let state_var = g.constant(self.state.clone());
        let out = model.forward(g, &batch, state_var, &self.masks);
        let bootstrap_values: Vec<F> = g
            .value(out.values)
            .data()
            .iter()
            .zip(&self.masks)
            .map(|(&v, &m)| v * m)
            .collect();
        g.reset();

        Ok(RolloutBuffer {
            t_len,
            num_samplers: w,
            num_agents: agents,
            obs_seq,
            actions,
            behavior_log_probs,
            values,
            rewards,
            masks,
            expert_actions,
            initial_state,
            bootstrap_values,
        })
    }

    /// Serializes the between-window position (samplers, tasks, streams,
    /// recurrent state, continuation masks).
    pub fn save_state(&self) -> serde_json::Value {
        serde_json::to_value(CollectSnapshot {
            samplers: self.samplers.iter().map(|s| s.save_state()).collect(),
            tasks: self.tasks.iter().map(|t| t.save_state()).collect(),
            rngs: self.rngs.clone(),
            state: self.state.data().iter().map(|&v| v.to_f64()).collect(),
            masks: self.masks.iter().map(|&v| v.to_f64()).collect(),
        })
        .expect("collection state serializes")
    }

    /// Restores a position saved by [`CollectState::save_state`] onto a
    /// freshly constructed state with the same sampler layout.
    pub fn restore_state(&mut self, state: &serde_json::Value) -> Result<()> {
        let snap: CollectSnapshot = serde_json::from_value(state.clone())
            .map_err(|e| Error::Checkpoint(format!("collection state does not parse: {e}")))?;
        if snap.samplers.len() != self.samplers.len() {
            return Err(Error::Checkpoint(format!(
                "collection state has {} samplers, this run uses {}",
                snap.samplers.len(),
                self.samplers.len()
            )));
        }
        if snap.state.len() != self.state.numel() || snap.masks.len() != self.masks.len() {
            return Err(Error::Checkpoint(format!(
                "collection state sized for {} state elements / {} masks, this run has {} / {}",
                snap.state.len(),
                snap.masks.len(),
                self.state.numel(),
                self.masks.len()
            )));
        }
        for (i, (sampler, task)) in
            self.samplers.iter_mut().zip(self.tasks.iter_mut()).enumerate()
        {
            sampler.restore_state(&snap.samplers[i])?;
            task.restore_state(&snap.tasks[i])?;
        }
        self.rngs = snap.rngs;
        for (dst, &src) in self.state.data_mut().iter_mut().zip(&snap.state) {
            *dst = F::from_f64(src);
        }
        for (dst, &src) in self.masks.iter_mut().zip(&snap.masks) {
            *dst = F::from_f64(src);
        }
        self.episodes.clear();
        Ok(())
    }
}
