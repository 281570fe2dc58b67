use serde::{Deserialize, Serialize};

use crate::geometry::normalize_angle;
use crate::messages::Path2D;
use crate::{Pose2D, Twist2D};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackerConfig {
    pub lookahead: f64,
    pub heading_gain: f64,
    pub speed_gain: f64,
    pub goal_tolerance: f64,
    pub max_vx: f64,
    pub max_wz: f64,
    pub control_rate_hz: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            lookahead: 0.25,
            heading_gain: 2.0,
            speed_gain: 1.0,
            goal_tolerance: 0.1,
            max_vx: 0.4,
            max_wz: 1.5,
            control_rate_hz: 25.0,
        }
    }
}

/// Proportional waypoint follower.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PathTracker {
    pub cfg: TrackerConfig,
    path: Path2D,
    target: usize,
    done: bool,
}

impl PathTracker {
    pub fn new(cfg: TrackerConfig) -> Self {
        Self { cfg, path: Path2D::default(), target: 0, done: true }
    }

    /// Starts following `path` from its first waypoint.
    pub fn set_path(&mut self, path: Path2D) {
        self.done = path.poses.is_empty();
        self.path = path;
        self.target = 0;
    }

    pub fn path(&self) -> &Path2D {
        &self.path
    }

    pub fn target_index(&self) -> usize {
        self.target
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Velocity command for the robot at `pose`. Once within the goal tolerance of
    /// the final waypoint the tracker stops and returns a zero twist from then on.
    pub fn step(&mut self, pose: &Pose2D) -> Twist2D {
        let Some(last) = self.path.poses.last() else {
            self.done = true;
            return Twist2D::zero();
        };
        if self.done || pose.distance_to(last) <= self.cfg.goal_tolerance {
            self.done = true;
            self.target = self.path.poses.len();
            return Twist2D::zero();
        }
        let n = self.path.poses.len();
        while self.target + 1 < n && pose.distance_to(&self.path.poses[self.target]) <= self.cfg.lookahead {
            self.target += 1;
        }
        let t = &self.path.poses[self.target];
        let (dx, dy) = (t.x - pose.x, t.y - pose.y);
        let e = normalize_angle(dy.atan2(dx) - pose.theta);
        let dist = dx.hypot(dy);
        let vx = (self.cfg.speed_gain * dist * e.cos().max(0.0)).clamp(-self.cfg.max_vx, self.cfg.max_vx);
        let wz = (self.cfg.heading_gain * e).clamp(-self.cfg.max_wz, self.cfg.max_wz);
        Twist2D::new(vx, 0.0, wz)
    }
}
