//! The shared grid environment.
//!
//! A [`GridEnv`] is pure world state — cells with integer-coded contents and
//! agent poses — with no goals, rewards, or termination rules of its own.
//! Tasks layer those on top; several very different tasks (instruction
//! navigation, lava crossing, a two-player hunting game) reuse this one type
//! unchanged, which is the decoupling the whole framework is built around.
//!
//! Cell contents use the classic three-channel integer encoding: object
//! kind, color, and state, with the code tables below.

use serde::{Deserialize, Serialize};

/// Object kind codes (channel 0 of every grid observation).
pub mod kind {
    pub const UNSEEN: u16 = 0;
    pub const EMPTY: u16 = 1;
    pub const WALL: u16 = 2;
    pub const FLOOR: u16 = 3;
    pub const DOOR: u16 = 4;
    pub const KEY: u16 = 5;
    pub const BALL: u16 = 6;
    pub const BOX: u16 = 7;
    pub const GOAL: u16 = 8;
    pub const LAVA: u16 = 9;
    pub const AGENT: u16 = 10;
    /// Exclusive upper bound for kind codes.
    pub const COUNT: usize = 11;
}

/// Color codes (channel 1).
pub mod color {
    pub const RED: u16 = 0;
    pub const GREEN: u16 = 1;
    pub const BLUE: u16 = 2;
    pub const PURPLE: u16 = 3;
    pub const YELLOW: u16 = 4;
    pub const GREY: u16 = 5;
    pub const COUNT: usize = 6;

    pub const NAMES: [&str; COUNT] = ["red", "green", "blue", "purple", "yellow", "grey"];

    /// Display RGB for rendered frames.
    pub fn rgb(c: u16) -> [u8; 3] {
        match c {
            RED => [228, 57, 60],
            GREEN => [96, 189, 77],
            BLUE => [62, 109, 225],
            PURPLE => [158, 63, 199],
            YELLOW => [236, 205, 57],
            _ => [144, 144, 144],
        }
    }
}

/// State codes (channel 2). Plain cells are 0; tasks may repurpose this
/// channel (the hunting game stores agent identity here).
pub mod state {
    pub const NONE: u16 = 0;
    pub const COUNT: usize = 3;
}

/// Facing directions, clockwise from east, matching the usual grid codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[repr(u8)]
pub enum Dir {
    East = 0,
    South = 1,
    West = 2,
    North = 3,
}

impl Dir {
    pub fn from_u8(d: u8) -> Dir {
        match d & 3 {
            0 => Dir::East,
            1 => Dir::South,
            2 => Dir::West,
            _ => Dir::North,
        }
    }

    /// Unit vector (dx, dy) with y growing downward.
    pub fn delta(self) -> (i64, i64) {
        match self {
            Dir::East => (1, 0),
            Dir::South => (0, 1),
            Dir::West => (-1, 0),
            Dir::North => (0, -1),
        }
    }

    pub fn left(self) -> Dir {
        Dir::from_u8((self as u8).wrapping_add(3))
    }

    pub fn right(self) -> Dir {
        Dir::from_u8((self as u8).wrapping_add(1))
    }
}

/// One grid cell's contents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub kind: u16,
    pub color: u16,
    pub state: u16,
}

impl Cell {
    pub const fn empty() -> Cell {
        Cell { kind: kind::EMPTY, color: 0, state: 0 }
    }

    pub const fn wall() -> Cell {
        Cell { kind: kind::WALL, color: color::GREY, state: 0 }
    }

    pub fn of(kind: u16, color: u16) -> Cell {
        Cell { kind, color, state: 0 }
    }

    /// Whether sight passes through this cell (walls block; everything
    /// else, including lava, is see-through).
    pub fn see_behind(&self) -> bool {
        self.kind != kind::WALL
    }
}

/// An agent's position and facing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pose {
    pub x: usize,
    pub y: usize,
    pub dir: Dir,
}

impl Pose {
    pub fn new(x: usize, y: usize, dir: Dir) -> Pose {
        Pose { x, y, dir }
    }

    /// The cell directly ahead, or `None` at the world edge.
    pub fn front(&self, env: &GridEnv) -> Option<(usize, usize)> {
        let (dx, dy) = self.dir.delta();
        let fx = self.x as i64 + dx;
        let fy = self.y as i64 + dy;
        if fx < 0 || fy < 0 || fx >= env.width() as i64 || fy >= env.height() as i64 {
            None
        } else {
            Some((fx as usize, fy as usize))
        }
    }
}

/// A rectangle of cells, row-major. No goals, no rewards, no termination —
/// just world state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridEnv {
    width: usize,
    height: usize,
    cells: Vec<Cell>,
}

impl GridEnv {
    /// An all-empty grid.
    pub fn new(width: usize, height: usize) -> GridEnv {
        assert!(width > 0 && height > 0, "grid: dimensions must be positive, got {width}x{height}");
        GridEnv { width, height, cells: vec![Cell::empty(); width * height] }
    }

    /// An empty interior surrounded by a one-cell wall ring.
    pub fn walled(width: usize, height: usize) -> GridEnv {
        let mut env = GridEnv::new(width, height);
        for x in 0..width {
            env.set(x, 0, Cell::wall());
            env.set(x, height - 1, Cell::wall());
        }
        for y in 0..height {
            env.set(0, y, Cell::wall());
            env.set(width - 1, y, Cell::wall());
        }
        env
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> Cell {
        assert!(x < self.width && y < self.height, "grid: ({x}, {y}) outside {}x{}", self.width, self.height);
        self.cells[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, cell: Cell) {
        assert!(x < self.width && y < self.height, "grid: ({x}, {y}) outside {}x{}", self.width, self.height);
        self.cells[y * self.width + x] = cell;
    }

    /// Cell at possibly out-of-bounds coordinates; outside reads as wall,
    /// which is exactly how egocentric views should treat the world edge.
    pub fn get_or_wall(&self, x: i64, y: i64) -> Cell {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            Cell::wall()
        } else {
            self.get(x as usize, y as usize)
        }
    }

    /// Whether an agent could stand here (nothing but bare floor).
    pub fn is_empty(&self, x: usize, y: usize) -> bool {
        matches!(self.get(x, y).kind, kind::EMPTY | kind::FLOOR)
    }

    /// All empty cells, row-major order (deterministic for seeded draws).
    pub fn empty_cells(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for y in 0..self.height {
            for x in 0..self.width {
                if self.is_empty(x, y) {
                    out.push((x, y));
                }
            }
        }
        out
    }
}

/// Computes the `view x view x 3` egocentric observation for an agent:
/// agent at the bottom-center looking "up" the view, out-of-bounds as
/// walls, and cells hidden behind walls blanked to the unseen code.
pub fn egocentric_view(env: &GridEnv, pose: Pose, view: usize) -> Vec<u16> {
    assert!(view % 2 == 1, "egocentric view size must be odd, got {view}");
    let half = (view / 2) as i64;
    let (fx, fy) = pose.dir.delta();
    // The agent's right-hand direction: forward rotated 90° clockwise
    // (y grows downward, so clockwise is (x, y) → (-y, x)).
    let (rx, ry) = (-fy, fx);

    // Visible world cells in view coordinates: agent at (half, view-1).
    let mut cells = vec![Cell::wall(); view * view];
    for vy in 0..view {
        for vx in 0..view {
            let forward = (view - 1 - vy) as i64;
            let right = vx as i64 - half;
            let wx = pose.x as i64 + forward * fx + right * rx;
            let wy = pose.y as i64 + forward * fy + right * ry;
            cells[vy * view + vx] = env.get_or_wall(wx, wy);
        }
    }

    // Flood visibility from the agent outward; walls are themselves
    // visible but hide everything behind them.
    let mut visible = vec![false; view * view];
    visible[(view - 1) * view + view / 2] = true;
    for vy in (0..view).rev() {
        for vx in 0..view.saturating_sub(1) {
            if visible[vy * view + vx] && cells[vy * view + vx].see_behind() {
                visible[vy * view + vx + 1] = true;
                if vy > 0 {
                    visible[(vy - 1) * view + vx + 1] = true;
                    visible[(vy - 1) * view + vx] = true;
                }
            }
        }
        for vx in (1..view).rev() {
            if visible[vy * view + vx] && cells[vy * view + vx].see_behind() {
                visible[vy * view + vx - 1] = true;
                if vy > 0 {
                    visible[(vy - 1) * view + vx - 1] = true;
                    visible[(vy - 1) * view + vx] = true;
                }
            }
        }
    }

    let mut out = Vec::with_capacity(view * view * 3);
    for (cell, vis) in cells.iter().zip(&visible) {
        if *vis {
            out.extend_from_slice(&[cell.kind, cell.color, cell.state]);
        } else {
            out.extend_from_slice(&[kind::UNSEEN, 0, 0]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn walled_grid_has_empty_interior_and_solid_ring() {
        let env = GridEnv::walled(5, 4);
        for x in 0..5 {
            assert_eq!(env.get(x, 0).kind, kind::WALL);
            assert_eq!(env.get(x, 3).kind, kind::WALL);
        }
        for y in 0..4 {
            assert_eq!(env.get(0, y).kind, kind::WALL);
            assert_eq!(env.get(4, y).kind, kind::WALL);
        }
        assert!(env.is_empty(1, 1));
        assert!(env.is_empty(3, 2));
        assert_eq!(env.empty_cells().len(), 3 * 2);
    }

    #[test]
    fn directions_turn_and_advance_consistently() {
        assert_eq!(Dir::East.right(), Dir::South);
        assert_eq!(Dir::East.left(), Dir::North);
        assert_eq!(Dir::North.right(), Dir::East);
        for d in [Dir::East, Dir::South, Dir::West, Dir::North] {
            assert_eq!(d.left().right(), d);
            let (dx, dy) = d.delta();
            assert_eq!(dx.abs() + dy.abs(), 1);
        }
    }

    #[test]
    fn egocentric_view_is_agent_up_with_agent_at_bottom_center() {
        // A marker two cells ahead of the agent must appear two rows above
        // the agent slot at (3, 6) in a 7x7 view, for every facing.
        let mut env = GridEnv::walled(9, 9);
        let marker = Cell::of(kind::BALL, color::BLUE);
        for dir in [Dir::East, Dir::South, Dir::West, Dir::North] {
            let pose = Pose::new(4, 4, dir);
            let (dx, dy) = dir.delta();
            let (mx, my) = ((4 + 2 * dx) as usize, (4 + 2 * dy) as usize);
            env.set(mx, my, marker);
            let view = egocentric_view(&env, pose, 7);
            let at = |vx: usize, vy: usize| view[(vy * 7 + vx) * 3];
            assert_eq!(at(3, 4), kind::BALL, "marker misplaced when facing {dir:?}");
            assert_eq!(at(3, 6), kind::EMPTY, "agent's own cell should show the floor");
            env.set(mx, my, Cell::empty());
        }
    }

    #[test]
    fn cells_behind_walls_are_unseen() {
        // A wall spanning the whole view two cells ahead: the wall row is
        // visible, everything beyond it is occluded. (Shorter wall segments
        // can be seen around via the flood's diagonal spread, matching the
        // reference visibility rule.)
        let mut env = GridEnv::new(7, 7);
        for x in 0..7 {
            env.set(x, 2, Cell::wall());
        }
        let view = egocentric_view(&env, Pose::new(3, 4, Dir::North), 7);
        let at = |vx: usize, vy: usize| view[(vy * 7 + vx) * 3];
        assert_eq!(at(3, 6), kind::EMPTY, "agent's own cell visible");
        for vx in 0..7 {
            assert_eq!(at(vx, 4), kind::WALL, "the wall row itself is visible");
            assert_eq!(at(vx, 3), kind::UNSEEN, "cells behind the wall are hidden");
            assert_eq!(at(vx, 0), kind::UNSEEN, "cells far behind the wall are hidden");
        }
        assert_eq!(at(2, 5), kind::EMPTY, "cells in front of the wall stay visible");
    }

    #[test]
    fn world_edge_reads_as_wall_in_views() {
        let env = GridEnv::new(3, 3);
        let view = egocentric_view(&env, Pose::new(1, 1, Dir::North), 7);
        // The top row of the view lies far outside the 3x3 world.
        for vx in 0..7 {
            let k = view[vx * 3];
            assert!(
                k == kind::WALL || k == kind::UNSEEN,
                "out-of-bounds cells must read as wall (or be occluded), got {k}"
            );
        }
    }
}
