//! Instruction-conditioned navigation: "go to the <color> <kind>".
//!
//! A single room scattered with colored objects; exactly one matches the
//! five-word instruction. The agent sees a 7×7 egocentric crop plus the
//! instruction tokens, turns or moves forward, and succeeds by facing the
//! target from an adjacent cell. A breadth-first scripted expert provides
//! imitation labels.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::framework::{
    ChannelLayout, EpisodeResult, IntTensor, Observation, SensorSpec, StepResult, Task,
    TaskSampler, TaskSamplerSpec,
};
use crate::grids::env::{color, kind, Cell, Dir, GridEnv, Pose};
use crate::grids::nav::{self, PoseDistances, FORWARD, LEFT, NAV_ACTIONS, RIGHT};
use crate::grids::render::{render_rgb, render_text, Marker};
use crate::grids::sampler_core::SamplerCore;
use crate::grids::{egocentric_grid_spec, EGO_VIEW};

/// Instruction vocabulary: the three fixed words, six colors, three kinds.
pub mod token {
    use crate::grids::env::{color, kind};

    pub const GO: u16 = 0;
    pub const TO: u16 = 1;
    pub const THE: u16 = 2;
    pub const VOCAB: usize = 3 + color::COUNT + 3;

    pub fn of_color(c: u16) -> u16 {
        3 + c
    }

    pub fn of_kind(k: u16) -> u16 {
        match k {
            kind::KEY => 3 + color::COUNT as u16,
            kind::BALL => 4 + color::COUNT as u16,
            kind::BOX => 5 + color::COUNT as u16,
            other => panic!("no instruction token for object kind {other}"),
        }
    }
}

/// The three object kinds this task scatters around the room.
const OBJECT_KINDS: [u16; 3] = [kind::KEY, kind::BALL, kind::BOX];

/// Words per instruction: "go to the <color> <kind>".
pub const INSTRUCTION_LEN: usize = 5;

/// Episode horizon.
pub const MAX_STEPS: usize = 64;

/// Serializable task state; the distance table is rebuilt on restore.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct State {
    env: GridEnv,
    pose: Pose,
    target: (usize, usize),
    instruction: Vec<u16>,
    steps: usize,
    done: bool,
    success: bool,
    reward_total: f64,
    shortest: u32,
}

pub struct GoToLocalTask {
    state: State,
    dist: PoseDistances,
}

impl GoToLocalTask {
    /// Generates a solvable instance: target, `distractors` other objects
    /// (none matching the target's color+kind), and the agent, all placed
    /// uniformly on distinct empty cells of an `interior`-sized room.
    pub fn generate(rng: &mut ChaCha8Rng, interior: usize, distractors: usize) -> Result<Self> {
        if interior * interior < distractors + 2 {
            return Err(Error::Task(format!(
                "go-to-local: a {interior}x{interior} room cannot hold {distractors} distractors plus target and agent"
            )));
        }
        for _attempt in 0..1000 {
            let mut env = GridEnv::walled(interior + 2, interior + 2);
            let target_color = rng.gen_range(0..color::COUNT) as u16;
            let target_kind = OBJECT_KINDS[rng.gen_range(0..OBJECT_KINDS.len())];

            let place = |env: &mut GridEnv, rng: &mut ChaCha8Rng, cell: Cell| {
                let free = env.empty_cells();
                let (x, y) = free[rng.gen_range(0..free.len())];
                env.set(x, y, cell);
                (x, y)
            };
            let target = place(&mut env, rng, Cell::of(target_kind, target_color));
            for _ in 0..distractors {
                // Exactly one object may match the instruction.
                let (k, c) = loop {
                    let k = OBJECT_KINDS[rng.gen_range(0..OBJECT_KINDS.len())];
                    let c = rng.gen_range(0..color::COUNT) as u16;
                    if (k, c) != (target_kind, target_color) {
                        break (k, c);
                    }
                };
                place(&mut env, rng, Cell::of(k, c));
            }
            let free = env.empty_cells();
            let (ax, ay) = free[rng.gen_range(0..free.len())];
            let pose = Pose::new(ax, ay, Dir::from_u8(rng.gen_range(0..4)));

            let dist = Self::distances(&env, target);
            let shortest = dist.get(pose);
            if shortest == nav::UNREACHABLE {
                continue; // distractors sealed off every approach cell
            }
            let instruction = vec![
                token::GO,
                token::TO,
                token::THE,
                token::of_color(target_color),
                token::of_kind(target_kind),
            ];
            return Ok(GoToLocalTask {
                state: State {
                    env,
                    pose,
                    target,
                    instruction,
                    steps: 0,
                    done: false,
                    success: false,
                    reward_total: 0.0,
                    shortest,
                },
                dist,
            });
        }
        Err(Error::Task(format!(
            "go-to-local: could not generate a solvable {interior}x{interior} room with {distractors} distractors in 1000 attempts"
        )))
    }

    fn distances(env: &GridEnv, target: (usize, usize)) -> PoseDistances {
        let standable = |x: usize, y: usize| env.is_empty(x, y);
        let goals = nav::poses_facing(env, standable, target.0, target.1);
        nav::distances_to_goals(env, standable, &goals)
    }

    /// Whether the agent currently faces the target from an adjacent cell.
    fn facing_target(&self) -> bool {
        self.state.pose.front(&self.state.env) == Some(self.state.target)
    }
}

impl Task for GoToLocalTask {
    fn action_count(&self) -> usize {
        NAV_ACTIONS
    }

    fn observation_specs(&self) -> Vec<SensorSpec> {
        vec![
            egocentric_grid_spec(),
            SensorSpec::new(
                "instruction",
                &[INSTRUCTION_LEN],
                ChannelLayout::Uniform(token::VOCAB),
            ),
        ]
    }

    fn observe(&self) -> Vec<Observation> {
        let grid = crate::grids::env::egocentric_view(&self.state.env, self.state.pose, EGO_VIEW);
        let mut obs = Observation::new();
        obs.insert("grid".into(), IntTensor::new(&[EGO_VIEW, EGO_VIEW, 3], grid));
        obs.insert(
            "instruction".into(),
            IntTensor::new(&[INSTRUCTION_LEN], self.state.instruction.clone()),
        );
        vec![obs]
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepResult> {
        if self.state.done {
            return Err(Error::Task("go-to-local: step on a finished episode".into()));
        }
        let &[action] = actions else {
            return Err(Error::Task(format!(
                "go-to-local: expected 1 action, got {}",
                actions.len()
            )));
        };
        match action {
            LEFT => self.state.pose.dir = self.state.pose.dir.left(),
            RIGHT => self.state.pose.dir = self.state.pose.dir.right(),
            FORWARD => {
                if let Some((fx, fy)) = self.state.pose.front(&self.state.env) {
                    if self.state.env.is_empty(fx, fy) {
                        self.state.pose.x = fx;
                        self.state.pose.y = fy;
                    }
                }
            }
            other => {
                return Err(Error::Task(format!(
                    "go-to-local: action {other} out of range (3 actions)"
                )))
            }
        }
        self.state.steps += 1;

        let mut reward = 0.0;
        if self.facing_target() {
            self.state.done = true;
            self.state.success = true;
            reward = 1.0 - 0.9 * self.state.steps as f64 / MAX_STEPS as f64;
        } else if self.state.steps >= MAX_STEPS {
            self.state.done = true;
        }
        self.state.reward_total += reward;
        Ok(StepResult {
            observations: self.observe(),
            rewards: vec![reward],
            done: self.state.done,
            info: vec![],
        })
    }

    fn is_done(&self) -> bool {
        self.state.done
    }

    fn steps_taken(&self) -> usize {
        self.state.steps
    }

    fn max_steps(&self) -> usize {
        MAX_STEPS
    }

    fn provides_expert(&self) -> bool {
        true
    }

    fn expert_actions(&self) -> Option<Vec<usize>> {
        // Already at a goal pose (possible on spawn): any facing-preserving
        // action finishes the episode; a blocked forward is always safe.
        if self.dist.get(self.state.pose) == 0 {
            return Some(vec![FORWARD]);
        }
        let standable = |x: usize, y: usize| self.state.env.is_empty(x, y);
        self.dist
            .best_action(&self.state.env, standable, self.state.pose)
            .map(|a| vec![a])
    }

    fn episode_result(&self) -> EpisodeResult {
        EpisodeResult {
            success: self.state.success,
            length: self.state.steps,
            rewards: vec![self.state.reward_total],
            shortest_path: Some(self.state.shortest as usize),
            extras: vec![],
        }
    }

    fn save_state(&self) -> serde_json::Value {
        serde_json::to_value(&self.state).expect("go-to-local state serializes")
    }

    fn restore_state(&mut self, state: &serde_json::Value) -> Result<()> {
        let state: State = serde_json::from_value(state.clone())?;
        self.dist = Self::distances(&state.env, state.target);
        self.state = state;
        Ok(())
    }

    fn render_text(&self) -> String {
        let p = self.state.pose;
        render_text(&self.state.env, &[Marker::agent(p.x, p.y, p.dir, [228, 57, 60])])
    }

    fn render_image(&self) -> Option<(usize, usize, Vec<u8>)> {
        let p = self.state.pose;
        Some(render_rgb(&self.state.env, &[Marker::agent(p.x, p.y, p.dir, [228, 57, 60])]))
    }
}

/// Sequential generator of [`GoToLocalTask`] instances.
pub struct GoToLocalSampler {
    core: SamplerCore,
    interior: usize,
    distractors: usize,
}

impl GoToLocalSampler {
    /// `interior` is the playable room size (walls excluded); `distractors`
    /// the number of non-target objects.
    pub fn new(spec: &TaskSamplerSpec, interior: usize, distractors: usize) -> Self {
        Self { core: SamplerCore::new(spec), interior, distractors }
    }
}

impl TaskSampler for GoToLocalSampler {
    fn next_task(&mut self) -> Option<Box<dyn Task>> {
        if self.core.exhausted() {
            return None;
        }
        let interior = self.core.difficulty(self.interior);
        let task = GoToLocalTask::generate(&mut self.core.rng, interior, self.distractors)
            .unwrap_or_else(|e| panic!("go-to-local sampler: {e}"));
        self.core.count += 1;
        Some(Box::new(task))
    }

    fn total_sampled(&self) -> usize {
        self.core.count
    }

    fn save_state(&self) -> serde_json::Value {
        self.core.save_state()
    }

    fn restore_state(&mut self, state: &serde_json::Value) -> Result<()> {
        self.core.restore_state(state)
    }
}
