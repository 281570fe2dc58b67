use serde::{Deserialize, Serialize};

use crate::grid::bresenham_for_each;
use crate::messages::LidarScan;
use crate::{OccupancyGrid, Pose2D};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MappingConfig {
    /// Log-odds added to a beam's endpoint cell.
    pub hit_odds: i8,
    /// Log-odds removed from each cell a beam passes through.
    pub miss_odds: i8,
    /// Ranges at or beyond this are treated as "no return".
    pub max_range: f64,
    /// Returns are pushed this far along the beam before choosing the endpoint
    /// cell, so points measured on a wall face land in the wall, meters.
    pub hit_extension: f64,
}

impl Default for MappingConfig {
    fn default() -> Self {
        Self { hit_odds: 3, miss_odds: 1, max_range: 12.0, hit_extension: 0.02 }
    }
}

/// Integrates `scan`, taken at `pose`, into `map`.
///
/// Every valid beam is rasterized from the robot's cell to its endpoint cell.
/// Cells before the endpoint lose `miss_odds`; the endpoint gains `hit_odds`
/// when the beam returned short of `max_range`, otherwise it too loses
/// `miss_odds`. Values saturate at the i8 limits and cells outside the map are
/// ignored.
pub fn update_map(map: &mut OccupancyGrid, pose: &Pose2D, scan: &LidarScan, cfg: &MappingConfig) {
    let geom = map.geometry();
    let start = geom.world_to_cell_unbounded(pose.x, pose.y);
    for (range, bearing) in scan.valid_beams() {
        let hit = range < cfg.max_range;
        let r = if hit { range + cfg.hit_extension } else { cfg.max_range };
        let a = pose.theta + bearing;
        let end = geom.world_to_cell_unbounded(pose.x + r * a.cos(), pose.y + r * a.sin());
        bresenham_for_each(start, end, |c, row| {
            let Some(cell) = geom.cell_checked(c, row) else { return };
            let idx = geom.index(cell);
            let v = map.cells[idx];
            map.cells[idx] = if (c, row) == end && hit { v.saturating_add(cfg.hit_odds) } else { v.saturating_sub(cfg.miss_odds) };
        });
    }
}
