//! Tasks and task samplers.
//!
//! An environment holds world state with no goal of its own; a task wraps an
//! environment and defines the actions available to the agent, the rewards,
//! and the success criteria. Fresh task instances are produced sequentially
//! by a [`TaskSampler`]; finished tasks are simply discarded. This split
//! lets several tasks (different goals, rewards, horizons) share one
//! environment implementation unchanged.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::framework::spaces::{Observation, SensorSpec};

/// Outcome of a single [`Task::step`] call.
#[derive(Debug, Clone)]
pub struct StepResult {
    /// One observation per agent, in agent order.
    pub observations: Vec<Observation>,
    /// One reward per agent for this transition.
    pub rewards: Vec<f64>,
    /// The episode ended on this step (success, failure, or horizon).
    pub done: bool,
    /// Diagnostic scalars (never consumed by training).
    pub info: Vec<(String, f64)>,
}

/// Summary of one finished episode, used for evaluation metrics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpisodeResult {
    /// Whether the task's success criterion was met.
    pub success: bool,
    /// Number of steps taken.
    pub length: usize,
    /// Sum of rewards per agent.
    pub rewards: Vec<f64>,
    /// Length of the shortest action sequence that would have succeeded,
    /// when the task can compute one (navigation tasks can; games cannot).
    pub shortest_path: Option<usize>,
    /// Task-specific episode counters (e.g. captures in a hunting game),
    /// averaged across episodes by evaluation.
    pub extras: Vec<(String, f64)>,
}

impl EpisodeResult {
    /// Total reward summed over agents.
    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }

    /// Success weighted by Path Length: `S · l / max(p, l)` where `l` is the
    /// shortest path and `p` the path taken. `None` when the task does not
    /// define a shortest path.
    pub fn spl(&self) -> Option<f64> {
        let shortest = self.shortest_path? as f64;
        if !self.success {
            return Some(0.0);
        }
        // A zero-length shortest path (spawned at the goal) counts as a
        // perfectly efficient success.
        if shortest == 0.0 {
            return Some(1.0);
        }
        Some(shortest / (self.length as f64).max(shortest))
    }
}

/// A goal-directed episode over some environment.
///
/// Object-safe so heterogeneous tasks can sit behind `Box<dyn Task>`; all
/// tensor work stays on the model side of the fence.
pub trait Task: Send {
    /// Number of agents acting simultaneously (1 for single-agent tasks).
    fn num_agents(&self) -> usize {
        1
    }

    /// Size of the (shared) discrete action space.
    fn action_count(&self) -> usize;

    /// The sensors every observation of this task carries.
    fn observation_specs(&self) -> Vec<SensorSpec>;

    /// Current observation for each agent, in agent order.
    fn observe(&self) -> Vec<Observation>;

    /// Applies one action per agent.
    ///
    /// Fails if the episode is already done or any action is out of range;
    /// the environment is left unchanged on failure.
    fn step(&mut self, actions: &[usize]) -> Result<StepResult>;

    fn is_done(&self) -> bool;

    /// Steps taken so far in this episode.
    fn steps_taken(&self) -> usize;

    /// Hard episode horizon enforced by `step`.
    fn max_steps(&self) -> usize;

    /// Whether this task ships a scripted expert. Pure — unlike calling
    /// [`Task::expert_actions`], checking availability this way cannot
    /// advance a stochastic expert's random stream.
    fn provides_expert(&self) -> bool {
        false
    }

    /// The scripted expert's action for each agent in the current state,
    /// when this task ships an expert (imitation losses and teacher forcing
    /// require one; stage validation checks availability up front).
    fn expert_actions(&self) -> Option<Vec<usize>> {
        None
    }

    /// Summary of the episode; meaningful once [`Task::is_done`] is true.
    fn episode_result(&self) -> EpisodeResult;

    /// Serializes enough state to reconstruct this task mid-episode.
    fn save_state(&self) -> serde_json::Value;

    /// Restores state produced by [`Task::save_state`] on a task of the
    /// same type and configuration.
    fn restore_state(&mut self, state: &serde_json::Value) -> Result<()>;

    /// Human-readable rendering of the current state, one line per grid row;
    /// tasks without a natural text form return an empty string.
    fn render_text(&self) -> String {
        String::new()
    }

    /// RGB frame of the current state as `(width_px, height_px, rgb8)` with
    /// rows top to bottom; `None` for tasks without a visual form.
    fn render_image(&self) -> Option<(usize, usize, Vec<u8>)> {
        None
    }
}

/// Dataset split a sampler draws from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Valid,
    Test,
}

impl Mode {
    /// Stable tag mixed into RNG stream derivation so the three splits draw
    /// disjoint task sequences from one base seed.
    pub fn tag(self) -> &'static str {
        match self {
            Mode::Train => "train",
            Mode::Valid => "valid",
            Mode::Test => "test",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Mode::Train),
            "valid" => Ok(Mode::Valid),
            "test" => Ok(Mode::Test),
            other => Err(Error::Config(format!(
                "unknown mode '{other}' (expected train, valid, or test)"
            ))),
        }
    }
}

/// Difficulty hook: maps tasks-sampled-so-far to a difficulty knob whose
/// meaning is sampler-specific (e.g. grid size). Pure so that sampler state
/// remains fully determined by (seed, mode, count).
pub type CurriculumFn = Arc<dyn Fn(usize) -> usize + Send + Sync>;

/// Configuration shared by all task samplers.
///
/// The same `(seed, mode)` always yields the identical task sequence, across
/// runs and across process restarts.
#[derive(Clone)]
pub struct TaskSamplerSpec {
    pub seed: u64,
    pub mode: Mode,
    /// Stop after this many tasks (`None` = unbounded, the usual setting
    /// for training; evaluation modes set a count).
    pub max_tasks: Option<usize>,
    pub curriculum: Option<CurriculumFn>,
}

impl fmt::Debug for TaskSamplerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TaskSamplerSpec")
            .field("seed", &self.seed)
            .field("mode", &self.mode)
            .field("max_tasks", &self.max_tasks)
            .field("curriculum", &self.curriculum.as_ref().map(|_| "<fn>"))
            .finish()
    }
}

impl TaskSamplerSpec {
    pub fn new(seed: u64, mode: Mode) -> Self {
        Self { seed, mode, max_tasks: None, curriculum: None }
    }

    pub fn with_max_tasks(mut self, n: usize) -> Self {
        self.max_tasks = Some(n);
        self
    }

    pub fn with_curriculum(mut self, f: CurriculumFn) -> Self {
        self.curriculum = Some(f);
        self
    }
}

/// Sequential source of fresh task instances.
pub trait TaskSampler: Send {
    /// The next task, or `None` once `max_tasks` have been produced.
    fn next_task(&mut self) -> Option<Box<dyn Task>>;

    /// Tasks handed out so far.
    fn total_sampled(&self) -> usize;

    /// Serializes the sampler position (RNG state and count) so training can
    /// resume with the identical remaining sequence.
    fn save_state(&self) -> serde_json::Value;

    fn restore_state(&mut self, state: &serde_json::Value) -> Result<()>;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spl_rewards_short_successful_paths() {
        let mut r = EpisodeResult {
            success: true,
            length: 10,
            rewards: vec![1.0],
            shortest_path: Some(5),
            extras: vec![],
        };
        assert_eq!(r.spl(), Some(0.5));
        r.length = 5;
        assert_eq!(r.spl(), Some(1.0));
        // Taking fewer steps than the shortest path is impossible, but the
        // formula stays capped at 1 regardless.
        r.length = 3;
        assert_eq!(r.spl(), Some(1.0));
        r.success = false;
        assert_eq!(r.spl(), Some(0.0));
        r.shortest_path = None;
        assert_eq!(r.spl(), None);
    }

    #[test]
    fn mode_parses_and_prints_round_trip() {
        for mode in [Mode::Train, Mode::Valid, Mode::Test] {
            assert_eq!(mode.tag().parse::<Mode>().unwrap(), mode);
        }
        assert!("dev".parse::<Mode>().is_err());
    }
}
