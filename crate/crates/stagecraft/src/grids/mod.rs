//! Gridworld environments and the three built-in tasks.
//!
//! One shared environment type ([`env::GridEnv`]) hosts three very different
//! tasks without any environment changes — the point of keeping tasks and
//! environments decoupled:
//!
//! * [`gotolocal`] — single-agent instruction-conditioned navigation with a
//!   breadth-first scripted expert,
//! * [`lava`] — single-agent hazard crossing whose scripted expert turns
//!   into a random policy near the goal,
//! * [`staghunt`] — a two-agent coordination game with no expert at all.
//!
//! [`nav`] provides the pose-space shortest paths the experts run on, and
//! [`render`] draws any of these worlds as text or RGB frames.

pub mod env;
pub mod gotolocal;
pub mod lava;
pub mod nav;
pub mod render;
mod sampler_core;
pub mod staghunt;

pub use gotolocal::{GoToLocalSampler, GoToLocalTask};
pub use lava::{LavaCrossingSampler, LavaCrossingTask};
pub use staghunt::{StagHuntSampler, StagHuntTask};

use crate::framework::{ChannelLayout, SensorSpec};

/// Side length of the egocentric view used by the navigation tasks.
pub const EGO_VIEW: usize = 7;

/// The egocentric grid sensor shared by the navigation tasks: a 7×7 crop of
/// (kind, color, state) cell codes in front of the agent.
pub fn egocentric_grid_spec() -> SensorSpec {
    SensorSpec::new(
        "grid",
        &[EGO_VIEW, EGO_VIEW, 3],
        ChannelLayout::Interleaved(vec![env::kind::COUNT, env::color::COUNT, env::state::COUNT]),
    )
}
