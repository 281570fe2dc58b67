//! Grid path planning with soft obstacle inflation, and waypoint tracking.

mod astar;
mod costgrid;
mod node;
mod tracker;

pub use astar::{astar, decimate, path_cost, plan_path, CellPath, NoPath, PlanResult, PlannerConfig};
pub use costgrid::{distance_transform, inflate, inflation_multiplier, CostGrid};
pub use node::TrackerNode;
pub use tracker::{PathTracker, TrackerConfig};
