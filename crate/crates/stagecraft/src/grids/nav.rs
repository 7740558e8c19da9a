//! Shortest paths over agent poses.
//!
//! Navigation experts plan over the pose space (x, y, facing) with the
//! three-action alphabet {turn left, turn right, move forward}, each action
//! costing one step. Distances-to-goal for *every* pose come from one
//! multi-source breadth-first search over reversed transitions, so per-step
//! expert queries are O(1) lookups afterwards.

use std::collections::VecDeque;

use crate::grids::env::{Dir, GridEnv, Pose};

/// Action indices shared by the navigation tasks.
pub const LEFT: usize = 0;
pub const RIGHT: usize = 1;
pub const FORWARD: usize = 2;
pub const NAV_ACTIONS: usize = 3;

/// Distance-to-goal (in actions) for every pose of a fixed grid.
pub struct PoseDistances {
    width: usize,
    height: usize,
    dist: Vec<u32>,
}

pub const UNREACHABLE: u32 = u32::MAX;

impl PoseDistances {
    fn index(&self, pose: Pose) -> usize {
        (pose.y * self.width + pose.x) * 4 + pose.dir as usize
    }

    /// Actions needed to reach the nearest goal pose, or [`UNREACHABLE`].
    pub fn get(&self, pose: Pose) -> u32 {
        assert!(
            pose.x < self.width && pose.y < self.height,
            "pose distances: ({}, {}) outside {}x{}",
            pose.x,
            pose.y,
            self.width,
            self.height
        );
        self.dist[self.index(pose)]
    }

    /// The first action of a shortest path from `pose`, preferring forward,
    /// then left, then right among equally short continuations. `None` if
    /// the goal is unreachable or `pose` is already a goal pose.
    pub fn best_action(&self, env: &GridEnv, standable: impl Fn(usize, usize) -> bool, pose: Pose) -> Option<usize> {
        let here = self.get(pose);
        if here == 0 || here == UNREACHABLE {
            return None;
        }
        for action in [FORWARD, LEFT, RIGHT] {
            let next = match action {
                FORWARD => match pose.front(env) {
                    Some((fx, fy)) if standable(fx, fy) => Pose::new(fx, fy, pose.dir),
                    _ => continue,
                },
                LEFT => Pose::new(pose.x, pose.y, pose.dir.left()),
                _ => Pose::new(pose.x, pose.y, pose.dir.right()),
            };
            if self.get(next) == here - 1 {
                return Some(action);
            }
        }
        None
    }
}

/// Multi-source BFS over reversed pose transitions from `goal_poses`.
///
/// `standable(x, y)` says whether the agent may occupy a cell; goal poses
/// themselves need not be standable-checked by the caller (they are taken
/// as given).
pub fn distances_to_goals(
    env: &GridEnv,
    standable: impl Fn(usize, usize) -> bool,
    goal_poses: &[Pose],
) -> PoseDistances {
    let (w, h) = (env.width(), env.height());
    let mut d = PoseDistances { width: w, height: h, dist: vec![UNREACHABLE; w * h * 4] };
    let mut queue = VecDeque::new();
    for &g in goal_poses {
        let idx = d.index(g);
        if d.dist[idx] != 0 {
            d.dist[idx] = 0;
            queue.push_back(g);
        }
    }
    while let Some(pose) = queue.pop_front() {
        let next = d.dist[d.index(pose)] + 1;
        // Reverse of a turn is the opposite turn; reverse of forward is the
        // pose one cell behind, same facing (if an agent may stand there).
        let mut push = |p: Pose| {
            let idx = d.index(p);
            if d.dist[idx] == UNREACHABLE {
                d.dist[idx] = next;
                queue.push_back(p);
            }
        };
        push(Pose::new(pose.x, pose.y, pose.dir.left()));
        push(Pose::new(pose.x, pose.y, pose.dir.right()));
        let (dx, dy) = pose.dir.delta();
        let bx = pose.x as i64 - dx;
        let by = pose.y as i64 - dy;
        if bx >= 0 && by >= 0 && (bx as usize) < w && (by as usize) < h && standable(bx as usize, by as usize)
        {
            push(Pose::new(bx as usize, by as usize, pose.dir));
        }
    }
    d
}

/// Goal poses for "stand anywhere on (gx, gy)".
pub fn poses_on(gx: usize, gy: usize) -> Vec<Pose> {
    [Dir::East, Dir::South, Dir::West, Dir::North]
        .into_iter()
        .map(|d| Pose::new(gx, gy, d))
        .collect()
}

/// Goal poses for "stand next to (tx, ty), facing it".
pub fn poses_facing(env: &GridEnv, standable: impl Fn(usize, usize) -> bool, tx: usize, ty: usize) -> Vec<Pose> {
    let mut out = Vec::new();
    for dir in [Dir::East, Dir::South, Dir::West, Dir::North] {
        let (dx, dy) = dir.delta();
        let ax = tx as i64 - dx;
        let ay = ty as i64 - dy;
        if ax >= 0
            && ay >= 0
            && (ax as usize) < env.width()
            && (ay as usize) < env.height()
            && standable(ax as usize, ay as usize)
        {
            out.push(Pose::new(ax as usize, ay as usize, dir));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grids::env::Cell;

    #[test]
    fn straight_corridor_distance_counts_moves_and_turns() {
        let env = GridEnv::walled(7, 3);
        let standable = |x: usize, y: usize| env.is_empty(x, y);
        let goals = poses_on(5, 1);
        let d = distances_to_goals(&env, standable, &goals);
        // Facing the goal four cells away: four forward moves.
        assert_eq!(d.get(Pose::new(1, 1, Dir::East)), 4);
        // Facing away: cheapest is one turn... but turning still faces a
        // wall, so two turns plus four moves.
        assert_eq!(d.get(Pose::new(1, 1, Dir::West)), 6);
        assert_eq!(d.get(Pose::new(1, 1, Dir::North)), 5);
        assert_eq!(d.get(Pose::new(5, 1, Dir::South)), 0);
    }

    #[test]
    fn best_action_prefers_forward_on_ties() {
        let env = GridEnv::walled(5, 5);
        let standable = |x: usize, y: usize| env.is_empty(x, y);
        // Goal in the corner: from the center facing east the shortest path
        // is move, turn right, move; starting with the turn costs one more,
        // so forward must be chosen.
        let d = distances_to_goals(&env, standable, &poses_on(3, 3));
        let from_center = d.get(Pose::new(2, 2, Dir::East));
        assert_eq!(from_center, 3, "move, turn, move");
        assert_eq!(d.best_action(&env, standable, Pose::new(2, 2, Dir::East)), Some(FORWARD));
        // Standing on the goal: no action wanted.
        assert_eq!(d.best_action(&env, standable, Pose::new(3, 3, Dir::East)), None);
    }

    #[test]
    fn walls_make_poses_unreachable() {
        let mut env = GridEnv::walled(7, 3);
        for y in 1..2 {
            env.set(3, y, Cell::wall());
        }
        let standable = |x: usize, y: usize| env.is_empty(x, y);
        let d = distances_to_goals(&env, standable, &poses_on(5, 1));
        assert_eq!(d.get(Pose::new(1, 1, Dir::East)), UNREACHABLE);
        assert_eq!(d.best_action(&env, standable, Pose::new(1, 1, Dir::East)), None);
    }

    #[test]
    fn facing_goals_are_adjacent_cells_looking_in() {
        let env = GridEnv::walled(6, 6);
        let standable = |x: usize, y: usize| env.is_empty(x, y);
        let goals = poses_facing(&env, standable, 3, 3);
        assert_eq!(goals.len(), 4);
        for g in &goals {
            let (dx, dy) = g.dir.delta();
            assert_eq!((g.x as i64 + dx, g.y as i64 + dy), (3, 3), "goal pose must face the target");
        }
        // Against the left wall only three approach cells are standable.
        let goals = poses_facing(&env, standable, 1, 3);
        assert_eq!(goals.len(), 3);
    }
}
