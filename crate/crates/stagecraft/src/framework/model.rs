//! The actor-critic model interface.
//!
//! A model maps a batch of integer observations plus a recurrent state to
//! action logits, value estimates, and the next state, all as graph nodes so
//! gradients flow end to end. Multi-agent batches flatten the agent
//! dimension into the rows: row `s·num_agents + a` carries sampler `s`,
//! agent `a`. Shared trunks see every row; per-agent heads select their own
//! rows.

use crate::framework::spaces::{ObsBatch, SensorSpec};
use crate::tensor::{Graph, Scalar, Tensor, Var};

/// One forward step's outputs, all rows aligned with the input batch.
#[derive(Debug, Clone, Copy)]
pub struct ModelOutput {
    /// Unnormalized action scores, `[rows, action_count]`.
    pub logits: Var,
    /// State-value estimates, `[rows, 1]`.
    pub values: Var,
    /// Recurrent state to carry into the next step, `[rows, hidden]`.
    pub next_state: Var,
}

/// Outputs of a whole rollout re-forwarded for an update, time-major:
/// row `t·rows + r` is step `t`, batch row `r`.
#[derive(Debug, Clone, Copy)]
pub struct SeqOutput {
    /// `[T·rows, action_count]`.
    pub logits: Var,
    /// `[T·rows, 1]`.
    pub values: Var,
    /// Recurrent state after the last step, `[rows, hidden]` — carried by
    /// callers that feed consecutive windows (e.g. off-policy batches).
    pub final_state: Var,
}

/// A recurrent actor-critic policy.
///
/// Implementations register their parameters in the [`Graph`] at
/// construction time and only build forward computations afterwards, so the
/// graph's parameter prefix stays stable across [`Graph::reset`].
pub trait ActorCriticModel<F: Scalar>: Send {
    /// Agents driven simultaneously per task.
    fn num_agents(&self) -> usize {
        1
    }

    /// Size of the discrete action space (shared across agents).
    fn action_count(&self) -> usize;

    /// Recurrent state width per row.
    fn hidden_dim(&self) -> usize;

    /// Sensors this model consumes, with the exact shapes it expects.
    fn consumed_sensors(&self) -> Vec<SensorSpec>;

    /// One step: embed observations, reset state rows whose mask is 0
    /// (multiplying by the mask, so an episode boundary forwards exactly
    /// like a zero state), advance the recurrence, emit heads.
    ///
    /// `masks` has one entry per row; `state` is `[rows, hidden]`.
    fn forward(&self, g: &mut Graph<F>, obs: &ObsBatch, state: Var, masks: &[F]) -> ModelOutput;

    /// Stable names for every parameter, aligned with its graph handle.
    /// Order defines the checkpoint and gradient-payload layout.
    fn named_params(&self) -> Vec<(String, Var)>;

    /// Zero recurrent state for a fresh batch.
    fn initial_state(&self, rows: usize) -> Tensor<F> {
        Tensor::zeros(&[rows, self.hidden_dim()])
    }

    /// Re-forwards a full rollout of `T = obs_seq.len()` steps from
    /// `initial_state`, threading the recurrence through the graph so
    /// backpropagation spans the whole window. `masks` is time-major
    /// `[T · rows]`, matching the rollout buffer layout.
    fn forward_seq(
        &self,
        g: &mut Graph<F>,
        obs_seq: &[ObsBatch],
        initial_state: &Tensor<F>,
        masks: &[F],
    ) -> SeqOutput {
        assert!(!obs_seq.is_empty(), "forward_seq: empty observation sequence");
        let rows = obs_seq[0].rows();
        assert_eq!(
            masks.len(),
            obs_seq.len() * rows,
            "forward_seq: {} masks do not cover {} steps of {} rows",
            masks.len(),
            obs_seq.len(),
            rows
        );
        let mut state = g.constant(initial_state.clone());
        let mut logits = Vec::with_capacity(obs_seq.len());
        let mut values = Vec::with_capacity(obs_seq.len());
        for (t, obs) in obs_seq.iter().enumerate() {
            let step = self.forward(g, obs, state, &masks[t * rows..(t + 1) * rows]);
            logits.push(step.logits);
            values.push(step.values);
            state = step.next_state;
        }
        SeqOutput {
            logits: g.concat_rows(&logits),
            values: g.concat_rows(&values),
            final_state: state,
        }
    }

    /// Total parameter element count (diagnostics, payload sizing).
    fn param_numel(&self, g: &Graph<F>) -> usize {
        self.named_params().iter().map(|(_, v)| g.value(*v).numel()).sum()
    }
}
