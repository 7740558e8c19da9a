//! Training algorithms: generalized advantage estimation, the PPO / A2C /
//! behavioral-cloning losses with weighted mixing, and the teacher-forcing
//! schedule.
//!
//! Everything here is a pure function of its inputs — schedule state such as
//! the decaying PPO clip is derived from step counts passed in, never stored
//! inside a loss, so losses can be evaluated concurrently on disjoint
//! batches and replayed deterministically.

pub mod gae;
pub mod losses;
pub mod schedules;

pub use gae::{gae_compute, gae_reference, normalize_advantages};
pub use losses::{
    combine_losses, A2cParams, CustomLoss, LossCtx, LossInputs, LossKind, LossSpec, ModelSeqOut,
    PpoParams,
};
pub use schedules::TeacherForcingSchedule;

use crate::error::{Error, Result};

/// Rollout and update geometry for one pipeline stage.
///
/// `W` parallel samplers each contribute a length-`T` rollout per
/// collection; updates then partition the `W` sampler sequences into
/// `minibatches` groups (sequences stay whole so recurrent state replay is
/// exact) and sweep the collection `epochs` times.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct UpdateGeometry {
    /// Parallel task samplers (`W`).
    pub num_samplers: usize,
    /// Steps collected from each sampler per rollout (`T`).
    pub rollout_len: usize,
    /// Minibatches per epoch; must divide `num_samplers`.
    pub minibatches: usize,
    /// Sweeps over each collection.
    pub epochs: usize,
}

impl UpdateGeometry {
    pub fn validate(&self) -> Result<()> {
        if self.num_samplers == 0 || self.rollout_len == 0 || self.minibatches == 0 || self.epochs == 0
        {
            return Err(Error::Config(format!(
                "update geometry: all fields must be positive, got {self:?}"
            )));
        }
        if self.num_samplers % self.minibatches != 0 {
            return Err(Error::Config(format!(
                "update geometry: {} minibatches do not evenly partition {} samplers",
                self.minibatches, self.num_samplers
            )));
        }
        Ok(())
    }

    /// Environment steps gathered per collection (`W·T`).
    pub fn steps_per_collection(&self) -> u64 {
        (self.num_samplers * self.rollout_len) as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometry_requires_sampler_partition() {
        let good = UpdateGeometry { num_samplers: 8, rollout_len: 32, minibatches: 4, epochs: 2 };
        assert!(good.validate().is_ok());
        assert_eq!(good.steps_per_collection(), 256);

        let bad = UpdateGeometry { num_samplers: 8, rollout_len: 32, minibatches: 3, epochs: 2 };
        assert!(bad.validate().is_err(), "3 minibatches cannot partition 8 samplers");

        let zero = UpdateGeometry { num_samplers: 0, rollout_len: 32, minibatches: 1, epochs: 1 };
        assert!(zero.validate().is_err());
    }
}
