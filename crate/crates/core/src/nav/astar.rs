use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::costgrid::{inflate, CostGrid, NEIGHBOURS};
use crate::grid::Cell;
use crate::messages::Path2D;
use crate::{OccupancyGrid, Pose2D};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerConfig {
    pub occupied_threshold: i8,
    /// Width of the inflation band, cells.
    pub safe_distance: u32,
    pub penalty: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self { occupied_threshold: 64, safe_distance: 4, penalty: 4.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum NoPath {
    #[error("start is outside the map")]
    StartOutOfBounds,
    #[error("goal is outside the map")]
    GoalOutOfBounds,
    #[error("start cell is an obstacle")]
    StartBlocked,
    #[error("goal cell is an obstacle")]
    GoalBlocked,
    #[error("goal is unreachable from start")]
    Unreachable,
}

/// Cell-level search result. `cost` is in cell units.
#[derive(Debug, Clone, PartialEq)]
pub struct CellPath {
    pub cells: Vec<Cell>,
    pub cost: f64,
    pub expanded: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanResult {
    pub path: Path2D,
    /// Path cost in meters, inflation multipliers included.
    pub cost: f64,
    pub expanded: usize,
}

#[derive(Debug, Clone, Copy)]
struct Open {
    f: f64,
    h: f64,
    idx: usize,
    g: f64,
}

impl PartialEq for Open {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Open {}

impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Open {
    // BinaryHeap is a max-heap: reverse so the smallest (f, h, idx) pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other.f.total_cmp(&self.f).then(other.h.total_cmp(&self.h)).then(other.idx.cmp(&self.idx))
    }
}

/// 8-connected A* over `grid`. Moving into a cell costs the step length
/// (1 or sqrt 2) times that cell's multiplier; the heuristic is the straight-line
/// distance in cells.
pub fn astar(grid: &CostGrid, start: Cell, goal: Cell) -> Result<CellPath, NoPath> {
    let geom = &grid.geometry;
    let (w, h) = (geom.width as i64, geom.height as i64);
    let (si, gi) = (geom.index(start), geom.index(goal));
    if !grid.is_traversable(si) {
        return Err(NoPath::StartBlocked);
    }
    if !grid.is_traversable(gi) {
        return Err(NoPath::GoalBlocked);
    }
    let heuristic = |i: usize| {
        let c = geom.cell_of_index(i);
        (c.col as f64 - goal.col as f64).hypot(c.row as f64 - goal.row as f64)
    };
    let n = geom.len();
    let mut g = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut open = BinaryHeap::new();
    g[si] = 0.0;
    let h0 = heuristic(si);
    open.push(Open { f: h0, h: h0, idx: si, g: 0.0 });
    let mut expanded = 0;
    while let Some(Open { idx, g: gi_cost, .. }) = open.pop() {
        if closed[idx] || gi_cost > g[idx] {
            continue;
        }
        closed[idx] = true;
        expanded += 1;
        if idx == gi {
            return Ok(CellPath { cells: backtrack(grid, &parent, gi), cost: g[gi], expanded });
        }
        let Cell { col, row } = geom.cell_of_index(idx);
        for (dc, dr) in NEIGHBOURS {
            let (c, r) = (col as i64 + dc, row as i64 + dr);
            if c < 0 || r < 0 || c >= w || r >= h {
                continue;
            }
            let j = (r * w + c) as usize;
            if closed[j] || !grid.is_traversable(j) {
                continue;
            }
            let step = if dc != 0 && dr != 0 { std::f64::consts::SQRT_2 } else { 1.0 };
            let cand = g[idx] + step * grid.multiplier[j];
            if cand < g[j] {
                g[j] = cand;
                parent[j] = idx;
                let hj = heuristic(j);
                open.push(Open { f: cand + hj, h: hj, idx: j, g: cand });
            }
        }
    }
    Err(NoPath::Unreachable)
}

fn backtrack(grid: &CostGrid, parent: &[usize], goal: usize) -> Vec<Cell> {
    let mut out = vec![grid.geometry.cell_of_index(goal)];
    let mut i = goal;
    while parent[i] != usize::MAX {
        i = parent[i];
        out.push(grid.geometry.cell_of_index(i));
    }
    out.reverse();
    out
}

/// Keeps the first and last cells and every cell where the step direction changes.
pub fn decimate(cells: &[Cell]) -> Vec<Cell> {
    if cells.len() <= 2 {
        return cells.to_vec();
    }
    let dir = |a: Cell, b: Cell| (b.col as i64 - a.col as i64, b.row as i64 - a.row as i64);
    let mut out = vec![cells[0]];
    for w in cells.windows(3) {
        if dir(w[0], w[1]) != dir(w[1], w[2]) {
            out.push(w[1]);
        }
    }
    out.push(cells[cells.len() - 1]);
    out
}

/// Plans from `start` to `goal` on `map`. The returned path begins at the start
/// position, passes through the centers of the cells where the grid path turns,
/// and ends exactly at `goal`. Each waypoint faces along the segment leading to
/// it; the last takes the goal heading.
pub fn plan_path(map: &OccupancyGrid, start: &Pose2D, goal: &Pose2D, cfg: &PlannerConfig) -> Result<PlanResult, NoPath> {
    let geom = map.geometry();
    let sc = geom.world_to_cell(start.x, start.y).ok_or(NoPath::StartOutOfBounds)?;
    let gc = geom.world_to_cell(goal.x, goal.y).ok_or(NoPath::GoalOutOfBounds)?;
    let grid = inflate(map, cfg.occupied_threshold, cfg.safe_distance, cfg.penalty);
    let found = astar(&grid, sc, gc)?;
    let corners = decimate(&found.cells);

    let mut pts: Vec<(f64, f64)> = Vec::with_capacity(corners.len() + 1);
    pts.push((start.x, start.y));
    for c in corners.iter().skip(1).take(corners.len().saturating_sub(2)) {
        pts.push(geom.cell_to_world(*c).expect("planner cell lies in the map"));
    }
    pts.push((goal.x, goal.y));
    pts.dedup();

    let mut poses = Vec::with_capacity(pts.len());
    let mut heading = start.theta;
    for (i, &(x, y)) in pts.iter().enumerate() {
        if i > 0 {
            let (px, py) = pts[i - 1];
            heading = (y - py).atan2(x - px);
        }
        poses.push(Pose2D::new(x, y, heading));
    }
    if let Some(last) = poses.last_mut() {
        last.theta = goal.theta;
    }
    Ok(PlanResult { path: Path2D::new(poses), cost: found.cost * geom.resolution, expanded: found.expanded })
}

/// Cost in cell units of moving along `cells` on `grid`.
pub fn path_cost(grid: &CostGrid, cells: &[Cell]) -> f64 {
    cells
        .windows(2)
        .map(|w| {
            let diag = w[0].col != w[1].col && w[0].row != w[1].row;
            let step = if diag { std::f64::consts::SQRT_2 } else { 1.0 };
            step * grid.multiplier[grid.geometry.index(w[1])]
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blank(w: usize, h: usize, res: f64) -> OccupancyGrid {
        OccupancyGrid::new(0.0, 0.0, res, w, h).unwrap()
    }

    fn center(map: &OccupancyGrid, c: usize, r: usize) -> Pose2D {
        let (x, y) = map.cell_to_world(Cell::new(c, r)).unwrap();
        Pose2D::new(x, y, 0.0)
    }

    #[test]
    fn straight_line_on_empty_grid() {
        let map = blank(10, 10, 0.1);
        let r = plan_path(&map, &center(&map, 0, 0), &center(&map, 0, 9), &PlannerConfig::default()).unwrap();
        assert!((r.cost - 0.9).abs() < 1e-12);
        assert_eq!(r.path.poses.len(), 2);
        assert!(r.path.is_well_formed());
        let last = r.path.poses[1];
        assert!((last.y - 0.95).abs() < 1e-12);
    }

    #[test]
    fn goal_in_obstacle_is_no_path() {
        let mut map = blank(10, 10, 0.1);
        map.set(Cell::new(5, 5), 127);
        let e = plan_path(&map, &center(&map, 0, 0), &center(&map, 5, 5), &PlannerConfig::default()).unwrap_err();
        assert_eq!(e, NoPath::GoalBlocked);
    }

    #[test]
    fn walled_off_goal_is_unreachable() {
        let mut map = blank(10, 10, 0.1);
        for r in 0..10 {
            map.set(Cell::new(5, r), 127);
        }
        let e = plan_path(&map, &center(&map, 0, 0), &center(&map, 9, 9), &PlannerConfig::default()).unwrap_err();
        assert_eq!(e, NoPath::Unreachable);
        assert!(plan_path(&map, &Pose2D::new(-1.0, 0.0, 0.0), &center(&map, 1, 1), &PlannerConfig::default()).is_err());
    }

    #[test]
    fn detour_turns_are_kept() {
        let mut map = blank(20, 20, 0.1);
        for r in 0..15 {
            map.set(Cell::new(10, r), 127);
        }
        let cfg = PlannerConfig { safe_distance: 0, ..PlannerConfig::default() };
        let r = plan_path(&map, &center(&map, 2, 2), &center(&map, 18, 2), &cfg).unwrap();
        assert!(r.path.poses.len() > 2);
        assert!(r.path.is_well_formed());
        for p in &r.path.poses {
            assert!(map.world_to_cell(p.x, p.y).map_or(false, |c| map.get(c) <= 64));
        }
    }

    #[test]
    fn decimation() {
        let cells: Vec<Cell> = [(0, 0), (1, 0), (2, 0), (3, 1), (4, 2), (4, 3)].iter().map(|&(c, r)| Cell::new(c, r)).collect();
        let d = decimate(&cells);
        assert_eq!(d, vec![Cell::new(0, 0), Cell::new(2, 0), Cell::new(4, 2), Cell::new(4, 3)]);
    }

    #[test]
    fn reported_cost_matches_path() {
        let mut map = blank(30, 30, 0.05);
        for (c, r) in [(10, 10), (11, 10), (12, 10), (12, 11), (20, 5)] {
            map.set(Cell::new(c, r), 127);
        }
        let grid = inflate(&map, 64, 3, 5.0);
        let found = astar(&grid, Cell::new(1, 1), Cell::new(28, 27)).unwrap();
        assert!((path_cost(&grid, &found.cells) - found.cost).abs() < 1e-9);
    }
}
