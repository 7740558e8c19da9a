//! The rollout buffer: one collection window of experience, time-major.
//!
//! A window covers `T` steps of `R = W·A` batch rows (`W` samplers × `A`
//! agents; row `s·A + a` is sampler `s`, agent `a`). Flat per-row arrays are
//! indexed `t·R + r`. The buffer also remembers each row's recurrent state
//! at the start of the window and the (pre-masked) value estimate for the
//! step just past it, which is everything an update needs to replay the
//! window through the model and estimate advantages.
//!
//! Minibatches partition *samplers*, never time: a sampler's whole sequence
//! stays together so recurrent state replay is exact.

use crate::framework::spaces::ObsBatch;
use crate::tensor::{Scalar, Tensor};

/// One collection window of experience.
#[derive(Debug, Clone)]
pub struct RolloutBuffer<F: Scalar> {
    /// Steps per sampler in this window (`T`).
    pub t_len: usize,
    /// Samplers (`W`).
    pub num_samplers: usize,
    /// Agents per sampler (`A`).
    pub num_agents: usize,
    /// Stacked observations per step, each `[R]` rows.
    pub obs_seq: Vec<ObsBatch>,
    /// Executed actions, `[T·R]`.
    pub actions: Vec<usize>,
    /// Log-probabilities of the executed actions under the behavior policy
    /// at collection time, `[T·R]`.
    pub behavior_log_probs: Vec<F>,
    /// Value estimates at collection time, `[T·R]`.
    pub values: Vec<F>,
    /// Per-agent rewards, `[T·R]`.
    pub rewards: Vec<F>,
    /// Continuation masks, `[T·R]`: 0 where step `t` begins a new episode.
    /// Row `t=0` reflects whether each sampler carried an episode over from
    /// the previous window.
    pub masks: Vec<F>,
    /// Expert labels, `[T·R]`, present when the task exposes an expert.
    pub expert_actions: Option<Vec<usize>>,
    /// Recurrent state at the start of the window, `[R, H]`.
    pub initial_state: Tensor<F>,
    /// Value estimate for the step after the window, `[R]`, already zeroed
    /// where the final step ended its episode.
    pub bootstrap_values: Vec<F>,
}

impl<F: Scalar> RolloutBuffer<F> {
    /// Batch rows per step (`W·A`).
    pub fn rows(&self) -> usize {
        self.num_samplers * self.num_agents
    }

    /// Total stored transitions (`T·W·A`), which is also the number of
    /// environment steps this window advances the global counter by.
    pub fn total_rows(&self) -> usize {
        self.t_len * self.rows()
    }

    /// Batch rows belonging to the samplers of minibatch `m` out of
    /// `minibatches`: samplers are dealt round-robin (`s % minibatches`),
    /// and each brings all of its agent rows, in order.
    pub fn minibatch_rows(&self, minibatches: usize, m: usize) -> Vec<usize> {
        assert!(m < minibatches, "minibatch {m} out of range for {minibatches}");
        assert_eq!(
            self.num_samplers % minibatches,
            0,
            "{minibatches} minibatches do not evenly partition {} samplers",
            self.num_samplers
        );
        let mut rows = Vec::with_capacity(self.rows() / minibatches);
        for s in (m..self.num_samplers).step_by(minibatches) {
            for a in 0..self.num_agents {
                rows.push(s * self.num_agents + a);
            }
        }
        rows
    }

    /// Gathers the update view for one minibatch: the selected rows' whole
    /// sequences plus per-row targets, all time-major over the kept rows.
    pub fn minibatch(&self, rows: &[usize], advantages: &[F], returns: &[F]) -> Minibatch<F> {
        let total = self.total_rows();
        assert_eq!(advantages.len(), total, "minibatch: {} advantages for {total} transitions", advantages.len());
        assert_eq!(returns.len(), total, "minibatch: {} returns for {total} transitions", returns.len());

        let all = self.rows();
        let keep = rows.len();
        let gather_f = |src: &[F]| -> Vec<F> {
            let mut out = Vec::with_capacity(self.t_len * keep);
            for t in 0..self.t_len {
                out.extend(rows.iter().map(|&r| src[t * all + r]));
            }
            out
        };
        let gather_u = |src: &[usize]| -> Vec<usize> {
            let mut out = Vec::with_capacity(self.t_len * keep);
            for t in 0..self.t_len {
                out.extend(rows.iter().map(|&r| src[t * all + r]));
            }
            out
        };

        let hidden = self.initial_state.shape()[1];
        let mut state = Vec::with_capacity(keep * hidden);
        for &r in rows {
            state.extend_from_slice(&self.initial_state.data()[r * hidden..(r + 1) * hidden]);
        }

        Minibatch {
            obs_seq: self.obs_seq.iter().map(|b| b.select_rows(rows)).collect(),
            initial_state: Tensor::new(&[keep, hidden], state),
            masks: gather_f(&self.masks),
            actions: gather_u(&self.actions),
            behavior_log_probs: gather_f(&self.behavior_log_probs),
            advantages: gather_f(advantages),
            returns: gather_f(returns),
            expert_actions: self.expert_actions.as_deref().map(gather_u),
        }
    }
}

/// The slice of a window one gradient update consumes: whole sequences for
/// the selected rows, time-major (`t·k + i` for kept row `i`).
#[derive(Debug, Clone)]
pub struct Minibatch<F: Scalar> {
    pub obs_seq: Vec<ObsBatch>,
    pub initial_state: Tensor<F>,
    pub masks: Vec<F>,
    pub actions: Vec<usize>,
    pub behavior_log_probs: Vec<F>,
    pub advantages: Vec<F>,
    pub returns: Vec<F>,
    pub expert_actions: Option<Vec<usize>>,
}

impl<F: Scalar> Minibatch<F> {
    pub fn rows(&self) -> usize {
        self.obs_seq.first().map_or(0, ObsBatch::rows)
    }

    pub fn total_rows(&self) -> usize {
        self.obs_seq.len() * self.rows()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::framework::spaces::{IntTensor, Observation};

    /// Window with recognizable values: W samplers of A agents over T steps,
    /// every per-row array filled with `t·1000 + r` so gathers are checkable.
    fn tagged_buffer(t_len: usize, w: usize, a: usize) -> RolloutBuffer<f64> {
        let rows = w * a;
        let tag = |t: usize, r: usize| (t * 1000 + r) as f64;
        let mut obs_seq = Vec::new();
        for t in 0..t_len {
            let per_row: Vec<Observation> = (0..rows)
                .map(|r| {
                    let mut o = Observation::new();
                    o.insert("tag".into(), IntTensor::new(&[1], vec![(t * 100 + r) as u16]));
                    o
                })
                .collect();
            let refs: Vec<&Observation> = per_row.iter().collect();
            obs_seq.push(ObsBatch::stack(&refs));
        }
        let flat: Vec<f64> =
            (0..t_len).flat_map(|t| (0..rows).map(move |r| tag(t, r))).collect();
        RolloutBuffer {
            t_len,
            num_samplers: w,
            num_agents: a,
            obs_seq,
            actions: (0..t_len * rows).collect(),
            behavior_log_probs: flat.clone(),
            values: flat.clone(),
            rewards: flat.clone(),
            masks: vec![1.0; t_len * rows],
            expert_actions: Some((0..t_len * rows).map(|i| i % 3).collect()),
            initial_state: Tensor::new(
                &[rows, 2],
                (0..rows * 2).map(|i| i as f64).collect(),
            ),
            bootstrap_values: vec![0.0; rows],
        }
    }

    #[test]
    fn minibatches_deal_samplers_round_robin_with_all_agents() {
        let buf = tagged_buffer(2, 4, 2);
        // Samplers {0, 2} → rows 0,1,4,5; samplers {1, 3} → rows 2,3,6,7.
        assert_eq!(buf.minibatch_rows(2, 0), vec![0, 1, 4, 5]);
        assert_eq!(buf.minibatch_rows(2, 1), vec![2, 3, 6, 7]);
        // One minibatch keeps everything.
        assert_eq!(buf.minibatch_rows(1, 0), (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn gather_is_time_major_over_kept_rows() {
        let buf = tagged_buffer(3, 4, 1);
        let adv: Vec<f64> = (0..buf.total_rows()).map(|i| i as f64 * 10.0).collect();
        let ret: Vec<f64> = (0..buf.total_rows()).map(|i| i as f64 + 0.5).collect();
        let rows = buf.minibatch_rows(2, 1); // samplers 1 and 3
        let mb = buf.minibatch(&rows, &adv, &ret);

        assert_eq!(mb.rows(), 2);
        assert_eq!(mb.total_rows(), 6);
        // Row r at step t holds t·1000 + r; kept rows are 1 and 3.
        assert_eq!(mb.behavior_log_probs, vec![1.0, 3.0, 1001.0, 1003.0, 2001.0, 2003.0]);
        // Flat targets gather at t·R + r for R = 4.
        assert_eq!(mb.advantages, vec![10.0, 30.0, 50.0, 70.0, 90.0, 110.0]);
        assert_eq!(mb.returns, vec![1.5, 3.5, 5.5, 7.5, 9.5, 11.5]);
        assert_eq!(mb.actions, vec![1, 3, 5, 7, 9, 11]);
        // Observations keep the same rows.
        assert_eq!(mb.obs_seq[2].sensor("tag").data(), &[201, 203]);
        // Initial state keeps rows 1 and 3 of the [4, 2] window state.
        assert_eq!(mb.initial_state.shape(), &[2, 2]);
        assert_eq!(mb.initial_state.data(), &[2.0, 3.0, 6.0, 7.0]);
    }

    #[test]
    fn multi_agent_rows_stay_with_their_sampler() {
        let buf = tagged_buffer(1, 2, 2);
        let rows = buf.minibatch_rows(2, 0);
        assert_eq!(rows, vec![0, 1], "sampler 0's two agent rows");
        let adv = vec![0.0; 4];
        let mb = buf.minibatch(&rows, &adv, &adv);
        assert_eq!(mb.expert_actions.as_deref(), Some(&[0, 1][..]));
    }

    #[test]
    #[should_panic(expected = "do not evenly partition")]
    fn uneven_partitions_are_rejected() {
        tagged_buffer(1, 4, 1).minibatch_rows(3, 0);
    }
}
