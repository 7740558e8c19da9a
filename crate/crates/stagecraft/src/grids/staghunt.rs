//! Two-player hunting game on an open 5×5 field.
//!
//! Two agents move simultaneously in the four cardinal directions. The field
//! always holds exactly two plants (one cell each) and one stag (a 2×2
//! footprint). An agent standing on a plant collects it for +1 and the plant
//! reappears elsewhere. If both agents stand inside the stag's footprint on
//! the same step they capture it for +5 each; if exactly one does, that agent
//! pays −g and the stag stays put. Every step the surviving stag walks one
//! cell toward the nearest agent. Episodes last exactly 45 steps.
//!
//! The penalty g sets the game's risk profile: small g makes cooperative
//! hunting cheap to attempt, large g drives learners toward safe solo plant
//! gathering. There is no scripted expert.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::framework::{
    ChannelLayout, EpisodeResult, IntTensor, Observation, SensorSpec, StepResult, Task,
    TaskSampler, TaskSamplerSpec,
};
use crate::grids::env::{color, kind, Cell, GridEnv};
use crate::grids::render::{render_rgb, render_text, Marker};
use crate::grids::sampler_core::SamplerCore;

/// Field side length.
pub const SIZE: usize = 5;
/// Stag footprint side length (a 2×2 block).
pub const STAG_SPAN: usize = 2;
/// Fixed episode length.
pub const EPISODE_LEN: usize = 45;
/// Number of plants alive at all times.
pub const NUM_PLANTS: usize = 2;

/// Identity-channel codes for the observation's third channel.
pub mod identity {
    pub const NONE: u16 = 0;
    pub const SELF: u16 = 1;
    pub const OTHER: u16 = 2;
    pub const BOTH: u16 = 3;
    pub const COUNT: usize = 4;
}

type Cell2 = (usize, usize);

#[derive(Debug, Clone, Serialize, Deserialize)]
struct State {
    /// Solo-encounter penalty magnitude (the "g" knob).
    penalty: f64,
    agents: [Cell2; 2],
    plants: [Cell2; NUM_PLANTS],
    /// Top-left cell of the stag's 2×2 footprint.
    stag: Cell2,
    steps: usize,
    done: bool,
    reward_totals: [f64; 2],
    captures: u64,
    plants_collected: u64,
    solo_penalties: u64,
    rng: ChaCha8Rng,
}

pub struct StagHuntTask {
    state: State,
}

/// The four cells covered by a stag anchored at `(x, y)`.
fn footprint(anchor: Cell2) -> [Cell2; 4] {
    let (x, y) = anchor;
    [(x, y), (x + 1, y), (x, y + 1), (x + 1, y + 1)]
}

fn in_footprint(anchor: Cell2, cell: Cell2) -> bool {
    footprint(anchor).contains(&cell)
}

impl StagHuntTask {
    /// Spawns the stag, both plants, and both agents on non-overlapping
    /// cells, uniformly at random.
    pub fn generate(rng: &mut ChaCha8Rng, penalty: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(rng.gen());
        let stag = (rng.gen_range(0..SIZE - 1), rng.gen_range(0..SIZE - 1));
        let mut taken: Vec<Cell2> = footprint(stag).to_vec();
        let draw_free = |rng: &mut ChaCha8Rng, taken: &mut Vec<Cell2>| {
            let free: Vec<Cell2> = (0..SIZE * SIZE)
                .map(|i| (i % SIZE, i / SIZE))
                .filter(|c| !taken.contains(c))
                .collect();
            let cell = free[rng.gen_range(0..free.len())];
            taken.push(cell);
            cell
        };
        let plants = [draw_free(&mut rng, &mut taken), draw_free(&mut rng, &mut taken)];
        let agents = [draw_free(&mut rng, &mut taken), draw_free(&mut rng, &mut taken)];
        StagHuntTask {
            state: State {
                penalty,
                agents,
                plants,
                stag,
                steps: 0,
                done: false,
                reward_totals: [0.0; 2],
                captures: 0,
                plants_collected: 0,
                solo_penalties: 0,
                rng,
            },
        }
    }

    /// Cells free of plants and the stag; optionally also of agents.
    fn free_cells(&self, avoid_agents: bool) -> Vec<Cell2> {
        (0..SIZE * SIZE)
            .map(|i| (i % SIZE, i / SIZE))
            .filter(|&c| {
                !self.state.plants.contains(&c)
                    && !in_footprint(self.state.stag, c)
                    && !(avoid_agents && self.state.agents.contains(&c))
            })
            .collect()
    }

    /// Respawns plant `i` on a cell free of everything, agents included, so
    /// a freshly spawned plant is never collected on the very same step.
    fn respawn_plant(&mut self, i: usize) {
        let free = self.free_cells(true);
        assert!(!free.is_empty(), "hunting field too crowded to respawn a plant");
        self.state.plants[i] = free[self.state.rng.gen_range(0..free.len())];
    }

    /// Respawns the stag on a 2×2 block free of plants, preferring blocks
    /// that also avoid both agents.
    fn respawn_stag(&mut self) {
        let anchors: Vec<Cell2> = (0..(SIZE - 1) * (SIZE - 1))
            .map(|i| (i % (SIZE - 1), i / (SIZE - 1)))
            .collect();
        let clear_of = |anchor: &Cell2, cells: &[Cell2]| {
            !footprint(*anchor).iter().any(|c| cells.contains(c))
        };
        let preferred: Vec<Cell2> = anchors
            .iter()
            .copied()
            .filter(|a| clear_of(a, &self.state.plants) && clear_of(a, &self.state.agents))
            .collect();
        let pool = if preferred.is_empty() {
            anchors.into_iter().filter(|a| clear_of(a, &self.state.plants)).collect()
        } else {
            preferred
        };
        assert!(!pool.is_empty(), "hunting field too crowded to respawn the stag");
        self.state.stag = pool[self.state.rng.gen_range(0..pool.len())];
    }

    /// One cardinal step of the stag toward the nearest agent (ties go to
    /// agent 0; vertical movement preferred), blocked by field edges and
    /// plants. Agents never block it.
    fn chase(&mut self) {
        let (sx, sy) = self.state.stag;
        let dist = |a: Cell2| a.0.abs_diff(sx) + a.1.abs_diff(sy);
        let target = if dist(self.state.agents[1]) < dist(self.state.agents[0]) {
            self.state.agents[1]
        } else {
            self.state.agents[0]
        };
        let dy = target.1 as i64 - sy as i64;
        let dx = target.0 as i64 - sx as i64;
        let mut moves: Vec<(i64, i64)> = Vec::new();
        if dy != 0 {
            moves.push((0, dy.signum()));
        }
        if dx != 0 {
            moves.push((dx.signum(), 0));
        }
        for (mx, my) in moves {
            let nx = sx as i64 + mx;
            let ny = sy as i64 + my;
            if nx < 0 || ny < 0 || nx as usize >= SIZE - 1 || ny as usize >= SIZE - 1 {
                continue;
            }
            let anchor = (nx as usize, ny as usize);
            if footprint(anchor).iter().any(|c| self.state.plants.contains(c)) {
                continue;
            }
            self.state.stag = anchor;
            return;
        }
    }

    /// The full-map observation for one agent: object kind and color planes
    /// plus an identity plane marking itself and its partner.
    fn observe_agent(&self, agent: usize) -> Observation {
        let mut data = vec![0u16; SIZE * SIZE * 3];
        for y in 0..SIZE {
            for x in 0..SIZE {
                let at = (y * SIZE + x) * 3;
                let (k, c) = if self.state.plants.contains(&(x, y)) {
                    (kind::BALL, color::GREEN)
                } else if in_footprint(self.state.stag, (x, y)) {
                    (kind::BOX, color::RED)
                } else {
                    (kind::EMPTY, 0)
                };
                let me = (self.state.agents[agent] == (x, y)) as u16;
                let partner = (self.state.agents[1 - agent] == (x, y)) as u16;
                data[at] = k;
                data[at + 1] = c;
                data[at + 2] = me * identity::SELF + partner * identity::OTHER;
            }
        }
        let mut obs = Observation::new();
        obs.insert("grid".into(), IntTensor::new(&[SIZE, SIZE, 3], data));
        obs
    }
}

impl Task for StagHuntTask {
    fn num_agents(&self) -> usize {
        2
    }

    /// Four cardinal moves, coded like facing directions: E, S, W, N.
    fn action_count(&self) -> usize {
        4
    }

    fn observation_specs(&self) -> Vec<SensorSpec> {
        vec![SensorSpec::new(
            "grid",
            &[SIZE, SIZE, 3],
            ChannelLayout::Interleaved(vec![kind::COUNT, color::COUNT, identity::COUNT]),
        )]
    }

    fn observe(&self) -> Vec<Observation> {
        vec![self.observe_agent(0), self.observe_agent(1)]
    }

    fn step(&mut self, actions: &[usize]) -> Result<StepResult> {
        if self.state.done {
            return Err(Error::Task("stag hunt: step on a finished episode".into()));
        }
        let &[a0, a1] = actions else {
            return Err(Error::Task(format!(
                "stag hunt: expected 2 actions, got {}",
                actions.len()
            )));
        };
        let mut rewards = [0.0f64; 2];
        let mut info: Vec<(String, f64)> = Vec::new();

        // 1. Both agents move; the field edge blocks, everything else —
        //    including the other agent — is enterable.
        for (i, &a) in [a0, a1].iter().enumerate() {
            let (dx, dy) = match a {
                0 => (1i64, 0i64), // east
                1 => (0, 1),       // south
                2 => (-1, 0),      // west
                3 => (0, -1),      // north
                other => {
                    return Err(Error::Task(format!(
                        "stag hunt: action {other} out of range (4 cardinal moves)"
                    )))
                }
            };
            let (x, y) = self.state.agents[i];
            let nx = x as i64 + dx;
            let ny = y as i64 + dy;
            if nx >= 0 && ny >= 0 && (nx as usize) < SIZE && (ny as usize) < SIZE {
                self.state.agents[i] = (nx as usize, ny as usize);
            }
        }

        // 2. Plant collection: +1 per agent standing on a plant (a shared
        //    cell pays both), then the plant grows back elsewhere.
        for p in 0..NUM_PLANTS {
            let on_plant: Vec<usize> =
                (0..2).filter(|&i| self.state.agents[i] == self.state.plants[p]).collect();
            if on_plant.is_empty() {
                continue;
            }
            for &i in &on_plant {
                rewards[i] += 1.0;
            }
            self.state.plants_collected += on_plant.len() as u64;
            self.respawn_plant(p);
        }

        // 3. Stag resolution: both inside the footprint is a capture (+5
        //    each, stag respawns); exactly one inside pays the penalty and
        //    the stag survives.
        let inside: Vec<usize> =
            (0..2).filter(|&i| in_footprint(self.state.stag, self.state.agents[i])).collect();
        let captured = inside.len() == 2;
        if captured {
            rewards[0] += 5.0;
            rewards[1] += 5.0;
            self.state.captures += 1;
            self.respawn_stag();
        } else if let &[lone] = inside.as_slice() {
            rewards[lone] -= self.state.penalty;
            self.state.solo_penalties += 1;
        }

        // 4. The surviving stag walks toward the nearest agent.
        if !captured {
            self.chase();
        }

        self.state.steps += 1;
        self.state.done = self.state.steps >= EPISODE_LEN;
        self.state.reward_totals[0] += rewards[0];
        self.state.reward_totals[1] += rewards[1];
        info.push(("stag_captured".into(), captured as u64 as f64));
        Ok(StepResult {
            observations: self.observe(),
            rewards: rewards.to_vec(),
            done: self.state.done,
            info,
        })
    }

    fn is_done(&self) -> bool {
        self.state.done
    }

    fn steps_taken(&self) -> usize {
        self.state.steps
    }

    fn max_steps(&self) -> usize {
        EPISODE_LEN
    }

    fn episode_result(&self) -> EpisodeResult {
        EpisodeResult {
            success: self.state.captures > 0,
            length: self.state.steps,
            rewards: self.state.reward_totals.to_vec(),
            shortest_path: None,
            extras: vec![
                ("stag_captures".into(), self.state.captures as f64),
                ("plants_collected".into(), self.state.plants_collected as f64),
                ("solo_penalties".into(), self.state.solo_penalties as f64),
            ],
        }
    }

    fn save_state(&self) -> serde_json::Value {
        serde_json::to_value(&self.state).expect("stag hunt state serializes")
    }

    fn restore_state(&mut self, state: &serde_json::Value) -> Result<()> {
        self.state = serde_json::from_value(state.clone())?;
        Ok(())
    }

    fn render_text(&self) -> String {
        let env = self.scene();
        let [a, b] = self.state.agents;
        render_text(
            &env,
            &[
                Marker { x: a.0, y: a.1, glyph: '0', rgb: color::rgb(color::GREY) },
                Marker { x: b.0, y: b.1, glyph: '1', rgb: color::rgb(color::GREY) },
            ],
        )
    }

    fn render_image(&self) -> Option<(usize, usize, Vec<u8>)> {
        let env = self.scene();
        let [a, b] = self.state.agents;
        Some(render_rgb(
            &env,
            &[
                Marker { x: a.0, y: a.1, glyph: '0', rgb: color::rgb(color::GREY) },
                Marker { x: b.0, y: b.1, glyph: '1', rgb: color::rgb(color::GREY) },
            ],
        ))
    }
}

impl StagHuntTask {
    /// The field as a plain grid (for rendering only).
    fn scene(&self) -> GridEnv {
        let mut env = GridEnv::new(SIZE, SIZE);
        for &(x, y) in &self.state.plants {
            env.set(x, y, Cell::of(kind::BALL, color::GREEN));
        }
        for (x, y) in footprint(self.state.stag) {
            env.set(x, y, Cell::of(kind::BOX, color::RED));
        }
        env
    }
}

/// Sequential generator of [`StagHuntTask`] instances.
pub struct StagHuntSampler {
    core: SamplerCore,
    penalty: f64,
}

impl StagHuntSampler {
    pub fn new(spec: &TaskSamplerSpec, penalty: f64) -> Self {
        Self { core: SamplerCore::new(spec), penalty }
    }
}

impl TaskSampler for StagHuntSampler {
    fn next_task(&mut self) -> Option<Box<dyn Task>> {
        if self.core.exhausted() {
            return None;
        }
        let task = StagHuntTask::generate(&mut self.core.rng, self.penalty);
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
