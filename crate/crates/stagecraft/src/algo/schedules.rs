//! Teacher-forcing schedule and the shared linear-interpolation rule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Linear interpolation from `start` to `end` over `horizon` steps, clamped
/// at `end` afterwards. The same rule drives teacher forcing, the PPO clip
/// decay, and the optimizer's learning rate.
pub fn linear_schedule(start: f64, end: f64, step: u64, horizon: u64) -> f64 {
    let frac = if horizon == 0 { 1.0 } else { (step as f64 / horizon as f64).min(1.0) };
    start + (end - start) * frac
}

/// Probability of replacing the agent's action with the expert's, as a
/// function of steps taken within the owning pipeline stage.
///
/// DAgger decays from 1 to 0; pure behavioral cloning holds it at 1; plain
/// RL stages simply omit the schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TeacherForcingSchedule {
    pub start_prob: f64,
    pub end_prob: f64,
    /// Steps over which the probability interpolates (stage-local).
    pub horizon: u64,
}

impl TeacherForcingSchedule {
    /// DAgger's schedule: 1 decaying linearly to 0 over `horizon` steps.
    pub fn dagger(horizon: u64) -> Self {
        TeacherForcingSchedule { start_prob: 1.0, end_prob: 0.0, horizon }
    }

    /// Always follow the expert (behavioral cloning on expert trajectories).
    pub fn always() -> Self {
        TeacherForcingSchedule { start_prob: 1.0, end_prob: 1.0, horizon: 1 }
    }

    pub fn validate(&self) -> Result<()> {
        for (label, p) in [("start_prob", self.start_prob), ("end_prob", self.end_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!(
                    "teacher forcing: {label} must lie in [0, 1], got {p}"
                )));
            }
        }
        if self.horizon == 0 {
            return Err(Error::Config("teacher forcing: horizon must be at least 1".into()));
        }
        Ok(())
    }

    /// Forcing probability after `steps_so_far` steps in the stage.
    pub fn probability(&self, steps_so_far: u64) -> f64 {
        linear_schedule(self.start_prob, self.end_prob, steps_so_far, self.horizon)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dagger_endpoints_and_midpoint() {
        let s = TeacherForcingSchedule::dagger(1000);
        assert_eq!(s.probability(0), 1.0);
        assert_eq!(s.probability(1000), 0.0);
        assert_eq!(s.probability(500), 0.5);
        assert_eq!(s.probability(5000), 0.0, "clamped past the horizon");
    }

    #[test]
    fn probability_is_monotone_and_bounded_for_decaying_schedules() {
        let s = TeacherForcingSchedule { start_prob: 0.9, end_prob: 0.2, horizon: 777 };
        let mut prev = f64::INFINITY;
        for step in (0..2000).step_by(13) {
            let p = s.probability(step);
            assert!((0.0..=1.0).contains(&p), "probability {p} out of bounds at step {step}");
            assert!(p <= prev + 1e-15, "probability increased at step {step}");
            prev = p;
        }
    }

    #[test]
    fn constant_schedule_stays_put() {
        let s = TeacherForcingSchedule::always();
        assert_eq!(s.probability(0), 1.0);
        assert_eq!(s.probability(123_456), 1.0);
    }

    #[test]
    fn validation_rejects_out_of_range_probabilities() {
        assert!(TeacherForcingSchedule { start_prob: 1.2, end_prob: 0.0, horizon: 10 }.validate().is_err());
        assert!(TeacherForcingSchedule { start_prob: 0.5, end_prob: -0.1, horizon: 10 }.validate().is_err());
        assert!(TeacherForcingSchedule { start_prob: 0.5, end_prob: 0.1, horizon: 0 }.validate().is_err());
        assert!(TeacherForcingSchedule::dagger(100).validate().is_ok());
    }
}
