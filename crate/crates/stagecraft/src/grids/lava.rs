//! Hazard crossing with a deliberately unreliable expert.
//!
//! The agent starts in the top-left corner of a walled room crossed by
//! full-span rivers of lava, each with a single opening, and must reach the
//! goal in the bottom-right corner. Stepping into lava ends the episode with
//! no reward. The scripted expert follows a breadth-first shortest path —
//! until it comes within a fixed action-distance of the goal, where it
//! degrades into a uniformly random policy. Imitating it verbatim therefore
//! caps performance; it is useful only as a bootstrap.

use std::cell::RefCell;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::framework::{
    EpisodeResult, IntTensor, Observation, SensorSpec, StepResult, Task, TaskSampler,
    TaskSamplerSpec,
};
use crate::grids::env::{color, kind, Cell, Dir, GridEnv, Pose};
use crate::grids::nav::{self, PoseDistances, FORWARD, LEFT, NAV_ACTIONS, RIGHT};
use crate::grids::render::{render_rgb, render_text, Marker};
use crate::grids::sampler_core::SamplerCore;
use crate::grids::{egocentric_grid_spec, EGO_VIEW};

/// Expert corruption radius: at an action-distance of this or less from the
/// goal, the expert acts uniformly at random.
pub const CORRUPTION_RADIUS: u32 = 10;

/// Serializable task state; the distance table is rebuilt on restore.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct State {
    env: GridEnv,
    pose: Pose,
    goal: (usize, usize),
    radius: u32,
    steps: usize,
    done: bool,
    success: bool,
    reward_total: f64,
    shortest: u32,
    expert_rng: RefCell<ChaCha8Rng>,
}

pub struct LavaCrossingTask {
    state: State,
    dist: PoseDistances,
}

/// An agent may stand anywhere that is neither wall nor lava (the goal cell
/// included). This is also the expert's notion of "safe".
fn standable(env: &GridEnv, x: usize, y: usize) -> bool {
    !matches!(env.get(x, y).kind, kind::WALL | kind::LAVA)
}

impl LavaCrossingTask {
    /// Generates a solvable instance: a walled `size`×`size` room with
    /// `rivers` full-span lava rivers (orientation alternating, positions
    /// drawn without replacement from non-adjacent columns/rows), one opening
    /// carved per river. Start is the top-left interior corner facing east,
    /// goal the bottom-right. Layouts whose goal is unreachable are redrawn.
    pub fn generate(rng: &mut ChaCha8Rng, size: usize, rivers: usize) -> Result<Self> {
        if size % 2 == 0 || size < 5 {
            return Err(Error::Task(format!(
                "lava crossing: grid size must be odd and at least 5, got {size}"
            )));
        }
        // Rivers sit on even interior coordinates {2, 4, ..., size-3}, which
        // keeps them apart and off the start/goal row and column.
        let lanes: Vec<usize> = (2..=size - 3).step_by(2).collect();
        let vertical = rivers.div_ceil(2);
        let horizontal = rivers / 2;
        if vertical > lanes.len() || horizontal > lanes.len() {
            return Err(Error::Task(format!(
                "lava crossing: {rivers} rivers do not fit a {size}x{size} grid \
                 ({} non-adjacent lanes per orientation)",
                lanes.len()
            )));
        }
        let goal = (size - 2, size - 2);
        let start = Pose::new(1, 1, Dir::East);

        for _attempt in 0..1000 {
            let mut env = GridEnv::walled(size, size);
            env.set(goal.0, goal.1, Cell::of(kind::GOAL, color::GREEN));

            let mut draw = |pool: &mut Vec<usize>| pool.swap_remove(rng.gen_range(0..pool.len()));
            let mut v_pool = lanes.clone();
            let mut h_pool = lanes.clone();
            let mut v_lanes = Vec::with_capacity(vertical);
            let mut h_lanes = Vec::with_capacity(horizontal);
            for i in 0..rivers {
                if i % 2 == 0 {
                    v_lanes.push(draw(&mut v_pool));
                } else {
                    h_lanes.push(draw(&mut h_pool));
                }
            }
            v_lanes.sort_unstable();
            h_lanes.sort_unstable();
            for &x in &v_lanes {
                for y in 1..size - 1 {
                    env.set(x, y, Cell::of(kind::LAVA, color::RED));
                }
            }
            for &y in &h_lanes {
                for x in 1..size - 1 {
                    env.set(x, y, Cell::of(kind::LAVA, color::RED));
                }
            }

            // The rivers partition the room into a grid of sub-rooms with
            // the start top-left and the goal bottom-right. Carve each
            // river's single opening where a random monotone room-to-room
            // path crosses it, so the maze is solvable by construction.
            let mut crossings = vec![true; v_lanes.len()];
            crossings.extend(std::iter::repeat(false).take(h_lanes.len()));
            for i in (1..crossings.len()).rev() {
                crossings.swap(i, rng.gen_range(0..=i));
            }
            let v_limits: Vec<usize> =
                std::iter::once(0).chain(v_lanes.iter().copied()).chain([size - 1]).collect();
            let h_limits: Vec<usize> =
                std::iter::once(0).chain(h_lanes.iter().copied()).chain([size - 1]).collect();
            let (mut col, mut row) = (0usize, 0usize);
            for crosses_vertical in crossings {
                if crosses_vertical {
                    let x = v_lanes[col];
                    let y = rng.gen_range(h_limits[row] + 1..h_limits[row + 1]);
                    env.set(x, y, Cell::empty());
                    col += 1;
                } else {
                    let y = h_lanes[row];
                    let x = rng.gen_range(v_limits[col] + 1..v_limits[col + 1]);
                    env.set(x, y, Cell::empty());
                    row += 1;
                }
            }

            let dist = nav::distances_to_goals(
                &env,
                |x, y| standable(&env, x, y),
                &nav::poses_on(goal.0, goal.1),
            );
            let shortest = dist.get(start);
            if shortest == nav::UNREACHABLE {
                continue;
            }
            let expert_rng = RefCell::new(ChaCha8Rng::seed_from_u64(rng.gen()));
            return Ok(LavaCrossingTask {
                state: State {
                    env,
                    pose: start,
                    goal,
                    radius: CORRUPTION_RADIUS,
                    steps: 0,
                    done: false,
                    success: false,
                    reward_total: 0.0,
                    shortest,
                    expert_rng,
                },
                dist,
            });
        }
        Err(Error::Task(format!(
            "lava crossing: no solvable {size}x{size} layout with {rivers} rivers in 1000 attempts"
        )))
    }

    fn rebuild_distances(state: &State) -> PoseDistances {
        nav::distances_to_goals(
            &state.env,
            |x, y| standable(&state.env, x, y),
            &nav::poses_on(state.goal.0, state.goal.1),
        )
    }
}

impl Task for LavaCrossingTask {
    fn action_count(&self) -> usize {
        NAV_ACTIONS
    }

    fn observation_specs(&self) -> Vec<SensorSpec> {
        vec![egocentric_grid_spec()]
    }

    fn observe(&self) -> Vec<Observation> {
        let grid = crate::grids::env::egocentric_view(&self.state.env, self.state.pose, EGO_VIEW);
        let mut obs = Observation::new();
        obs.insert("grid".into(), IntTensor::new(&[EGO_VIEW, EGO_VIEW, 3], grid));
        vec![obs]
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepResult> {
        if self.state.done {
            return Err(Error::Task("lava crossing: step on a finished episode".into()));
        }
        let &[action] = actions else {
            return Err(Error::Task(format!(
                "lava crossing: expected 1 action, got {}",
                actions.len()
            )));
        };
        let mut reward = 0.0;
        match action {
            LEFT => self.state.pose.dir = self.state.pose.dir.left(),
            RIGHT => self.state.pose.dir = self.state.pose.dir.right(),
            FORWARD => {
                if let Some((fx, fy)) = self.state.pose.front(&self.state.env) {
                    match self.state.env.get(fx, fy).kind {
                        kind::WALL => {}
                        // Lethal: the episode ends before the move lands, so
                        // the agent never actually occupies a lava cell.
                        kind::LAVA => self.state.done = true,
                        k => {
                            self.state.pose.x = fx;
                            self.state.pose.y = fy;
                            if k == kind::GOAL {
                                self.state.done = true;
                                self.state.success = true;
                            }
                        }
                    }
                }
            }
            other => {
                return Err(Error::Task(format!(
                    "lava crossing: action {other} out of range (3 actions)"
                )))
            }
        }
        self.state.steps += 1;
        if self.state.success {
            reward = 1.0 - 0.9 * self.state.steps as f64 / self.max_steps() as f64;
        } else if self.state.steps >= self.max_steps() {
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
        4 * self.state.env.width() * self.state.env.height()
    }

    fn provides_expert(&self) -> bool {
        true
    }

    /// Shortest-path action while far from the goal; uniformly random within
    /// `radius` actions of it.
    fn expert_actions(&self) -> Option<Vec<usize>> {
        let d = self.dist.get(self.state.pose);
        if d != nav::UNREACHABLE && d > self.state.radius {
            return self
                .dist
                .best_action(&self.state.env, |x, y| standable(&self.state.env, x, y), self.state.pose)
                .map(|a| vec![a]);
        }
        let a = self.state.expert_rng.borrow_mut().gen_range(0..NAV_ACTIONS);
        Some(vec![a])
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
        serde_json::to_value(&self.state).expect("lava crossing state serializes")
    }

    fn restore_state(&mut self, state: &serde_json::Value) -> Result<()> {
        let state: State = serde_json::from_value(state.clone())?;
        self.dist = Self::rebuild_distances(&state);
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

/// Sequential generator of [`LavaCrossingTask`] instances.
pub struct LavaCrossingSampler {
    core: SamplerCore,
    size: usize,
    rivers: usize,
}

impl LavaCrossingSampler {
    /// `size` is the full grid side (walls included); `rivers` the number of
    /// lava rivers. A curriculum, when installed, overrides the river count.
    pub fn new(spec: &TaskSamplerSpec, size: usize, rivers: usize) -> Self {
        Self { core: SamplerCore::new(spec), size, rivers }
    }
}

impl TaskSampler for LavaCrossingSampler {
    fn next_task(&mut self) -> Option<Box<dyn Task>> {
        if self.core.exhausted() {
            return None;
        }
        let rivers = self.core.difficulty(self.rivers);
        let task = LavaCrossingTask::generate(&mut self.core.rng, self.size, rivers)
            .unwrap_or_else(|e| panic!("lava crossing sampler: {e}"));
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
