use std::collections::VecDeque;

use crate::grid::{Cell, GridGeometry};
use crate::OccupancyGrid;

/// Traversal costs derived from an occupancy grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CostGrid {
    pub geometry: GridGeometry<f64>,
    pub obstacle: Vec<bool>,
    /// Chebyshev distance in cells to the nearest obstacle, `u32::MAX` when the
    /// grid has none.
    pub distance: Vec<u32>,
    /// Cost multiplier, at least 1 for traversable cells.
    pub multiplier: Vec<f64>,
}

impl CostGrid {
    pub fn width(&self) -> usize {
        self.geometry.width
    }

    pub fn height(&self) -> usize {
        self.geometry.height
    }

    pub fn is_traversable(&self, idx: usize) -> bool {
        !self.obstacle[idx]
    }

    /// Cost grid from raw obstacle flags with every free multiplier 1.
    pub fn from_obstacles(geometry: GridGeometry<f64>, obstacle: Vec<bool>) -> Self {
        assert_eq!(obstacle.len(), geometry.len(), "obstacle flags must cover the grid");
        let distance = distance_transform(&geometry, &obstacle);
        let multiplier = vec![1.0; obstacle.len()];
        Self { geometry, obstacle, distance, multiplier }
    }

    /// Recomputes multipliers for the given inflation parameters.
    pub fn with_inflation(mut self, safe_distance: u32, penalty: f64) -> Self {
        for (m, &d) in self.multiplier.iter_mut().zip(&self.distance) {
            *m = inflation_multiplier(d, safe_distance, penalty);
        }
        self
    }
}

/// `penalty * (safe - d) / safe + 1` inside the safety band, 1 outside.
pub fn inflation_multiplier(d: u32, safe_distance: u32, penalty: f64) -> f64 {
    if d < safe_distance {
        penalty * f64::from(safe_distance - d) / f64::from(safe_distance) + 1.0
    } else {
        1.0
    }
}

/// Cells with log-odds above `threshold` are obstacles; the rest are priced by
/// their distance to the nearest obstacle.
pub fn inflate(map: &OccupancyGrid, threshold: i8, safe_distance: u32, penalty: f64) -> CostGrid {
    let obstacle = map.cells.iter().map(|&v| v > threshold).collect();
    CostGrid::from_obstacles(map.geometry(), obstacle).with_inflation(safe_distance, penalty)
}

/// Multi-source breadth-first transform over 8-connected neighbours.
pub fn distance_transform(geometry: &GridGeometry<f64>, obstacle: &[bool]) -> Vec<u32> {
    let (w, h) = (geometry.width as i64, geometry.height as i64);
    let mut dist = vec![u32::MAX; obstacle.len()];
    let mut queue = VecDeque::new();
    for (i, _) in obstacle.iter().enumerate().filter(|(_, &o)| o) {
        dist[i] = 0;
        queue.push_back(i);
    }
    while let Some(i) = queue.pop_front() {
        let Cell { col, row } = geometry.cell_of_index(i);
        let next = dist[i] + 1;
        for (dc, dr) in NEIGHBOURS {
            let (c, r) = (col as i64 + dc, row as i64 + dr);
            if c < 0 || r < 0 || c >= w || r >= h {
                continue;
            }
            let j = (r * w + c) as usize;
            if dist[j] == u32::MAX {
                dist[j] = next;
                queue.push_back(j);
            }
        }
    }
    dist
}

pub(crate) const NEIGHBOURS: [(i64, i64); 8] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)];

#[cfg(test)]
mod tests {
    use super::*;

    fn blank(w: usize, h: usize) -> OccupancyGrid {
        OccupancyGrid::new(0.0, 0.0, 0.1, w, h).unwrap()
    }

    #[test]
    fn no_obstacles_means_unit_costs() {
        let g = inflate(&blank(8, 5), 64, 3, 10.0);
        assert!(g.multiplier.iter().all(|&m| m == 1.0));
        assert!(g.distance.iter().all(|&d| d == u32::MAX));
    }

    #[test]
    fn single_obstacle_band() {
        let mut m = blank(7, 7);
        m.set(Cell::new(3, 3), 100);
        let g = inflate(&m, 64, 2, 4.0);
        let at = |c, r| g.geometry.index(Cell::new(c, r));
        assert!(!g.is_traversable(at(3, 3)));
        for (c, r) in [(2, 2), (3, 2), (4, 4), (2, 3)] {
            assert_eq!(g.distance[at(c, r)], 1);
            assert_eq!(g.multiplier[at(c, r)], 3.0);
        }
        for (c, r) in [(1, 1), (5, 3), (3, 5)] {
            assert_eq!(g.distance[at(c, r)], 2);
            assert_eq!(g.multiplier[at(c, r)], 1.0);
        }
        assert_eq!(g.distance[at(0, 6)], 3);
    }

    #[test]
    fn threshold_is_strict() {
        let mut m = blank(3, 1);
        m.set(Cell::new(0, 0), 64);
        m.set(Cell::new(2, 0), 65);
        let g = inflate(&m, 64, 1, 1.0);
        assert_eq!(g.obstacle, vec![false, false, true]);
    }
}
