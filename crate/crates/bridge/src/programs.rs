//! Course example programs written against [`RobotHandle`]: wall following
//! and bug navigation. Both are event-driven on the lidar stream, so they run
//! at the scan rate whatever the wall-clock speed of the simulation.

use std::f64::consts::FRAC_PI_2;
use std::time::{Duration, Instant};

use mbot_core::messages::LidarScan;
use mbot_core::{normalize_angle, Channel, Pose2D, Twist2D};

use crate::client::{ClientError, RobotHandle};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WallFollowConfig {
    /// Desired distance to the wall on the robot's left, meters.
    pub distance: f64,
    pub speed: f64,
    /// No beam shorter than this means the wall is lost.
    pub lost_range: f64,
    pub k_distance: f64,
    pub k_angle: f64,
    pub max_wz: f64,
    /// Turn rate while searching for a lost wall.
    pub search_wz: f64,
}

impl Default for WallFollowConfig {
    fn default() -> Self {
        Self { distance: 0.5, speed: 0.2, lost_range: 2.0, k_distance: 2.0, k_angle: 1.5, max_wz: 1.0, search_wz: 0.6 }
    }
}

fn nearest_beam(scan: &LidarScan) -> Option<(f64, f64)> {
    scan.valid_beams().min_by(|a, b| a.0.total_cmp(&b.0))
}

/// One control step of min-range wall following with the wall kept on the
/// left. Steers so the nearest beam sits at +90 degrees and at the set
/// distance; rotates in place when no wall is in range.
pub fn wall_follow_command(scan: &LidarScan, cfg: &WallFollowConfig) -> Twist2D {
    match nearest_beam(scan) {
        Some((r, bearing)) if r < cfg.lost_range => {
            let e = normalize_angle(bearing - FRAC_PI_2);
            let wz = (cfg.k_angle * e + cfg.k_distance * (r - cfg.distance)).clamp(-cfg.max_wz, cfg.max_wz);
            Twist2D::new(cfg.speed * e.cos().max(0.0), 0.0, wz)
        }
        _ => Twist2D::new(0.0, 0.0, cfg.search_wz),
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct WallFollowReport {
    /// Minimum valid range of every scan processed, with its utime.
    pub min_ranges: Vec<(u64, f64)>,
    pub commands: usize,
}

fn drive_twist(robot: &mut RobotHandle, t: &Twist2D) -> Result<(), ClientError> {
    robot.drive(t.vx, t.vy, t.wz)
}

fn next_scan(robot: &mut RobotHandle, wait: Duration) -> Result<Option<LidarScan>, ClientError> {
    match robot.next_message(Channel::Lidar.name(), wait)? {
        Some((_, v)) => serde_json::from_value(v)
            .map(Some)
            .map_err(|e| ClientError::Transport(format!("bad LIDAR payload: {e}"))),
        None => Ok(None),
    }
}

/// Follows the wall for `duration` of robot time (measured on scan stamps),
/// then stops.
pub fn wall_follow(robot: &mut RobotHandle, cfg: &WallFollowConfig, duration: Duration) -> Result<WallFollowReport, ClientError> {
    let mut report = WallFollowReport::default();
    robot.subscribe(Channel::Lidar.name())?;
    let wait = robot.timeout();
    let mut first: Option<u64> = None;
    let result = loop {
        let scan = match next_scan(robot, wait) {
            Ok(Some(s)) => s,
            Ok(None) => break Err(ClientError::Timeout { channel: Channel::Lidar.name().into(), waited: wait }),
            Err(e) => break Err(e),
        };
        let t0 = *first.get_or_insert(scan.utime);
        if scan.utime.saturating_sub(t0) as f64 >= duration.as_secs_f64() * 1e6 {
            break Ok(());
        }
        if let Some((r, _)) = nearest_beam(&scan) {
            report.min_ranges.push((scan.utime, r));
        }
        if let Err(e) = drive_twist(robot, &wall_follow_command(&scan, cfg)) {
            break Err(e);
        }
        report.commands += 1;
    };
    robot.unsubscribe(Channel::Lidar.name())?;
    robot.stop()?;
    result.map(|()| report)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BugConfig {
    pub speed: f64,
    pub goal_tolerance: f64,
    /// Obstacle closer than this inside the front cone triggers boundary following.
    pub obstacle_range: f64,
    pub front_half_angle: f64,
    /// Half-width of the cone that must be clear towards the goal to leave a boundary.
    pub clear_half_angle: f64,
    /// Leave a boundary only when this much closer to the goal than at the hit point.
    pub leave_margin: f64,
    /// Returning within this radius of the hit point closes the loop...
    pub loop_radius: f64,
    /// ...provided the robot first got at least this far away from it.
    pub loop_departure: f64,
    pub heading_gain: f64,
    pub boundary: WallFollowConfig,
}

impl Default for BugConfig {
    fn default() -> Self {
        Self {
            speed: 0.2,
            goal_tolerance: 0.15,
            obstacle_range: 0.4,
            front_half_angle: 30f64.to_radians(),
            clear_half_angle: 15f64.to_radians(),
            leave_margin: 0.05,
            loop_radius: 0.3,
            loop_departure: 0.6,
            heading_gain: 1.5,
            boundary: WallFollowConfig { distance: 0.45, ..WallFollowConfig::default() },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BugOutcome {
    Reached,
    /// A full loop around an obstacle never opened a way to the goal.
    Unreachable,
    TimedOut,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BugReport {
    pub outcome: BugOutcome,
    pub final_pose: Pose2D,
    /// Number of obstacles that were circumnavigated (fully or partly).
    pub hits: usize,
    /// Every pose used for control, in order.
    pub trace: Vec<Pose2D>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum BugState {
    ToGoal,
    Boundary { hit: Pose2D, hit_dist: f64, departed: bool },
}

/// Minimum valid range inside `[center - half, center + half]`, robot frame.
fn cone_min(scan: &LidarScan, center: f64, half: f64) -> f64 {
    scan.valid_beams()
        .filter(|(_, b)| normalize_angle(b - center).abs() <= half)
        .map(|(r, _)| r)
        .fold(f64::INFINITY, f64::min)
}

/// Pure decision step of the bug controller. Returns the command and the
/// terminal outcome, if any.
fn bug_step(state: &mut BugState, pose: &Pose2D, scan: &LidarScan, goal: (f64, f64), cfg: &BugConfig) -> (Twist2D, Option<BugOutcome>) {
    let (dx, dy) = (goal.0 - pose.x, goal.1 - pose.y);
    let dist = dx.hypot(dy);
    if dist <= cfg.goal_tolerance {
        return (Twist2D::zero(), Some(BugOutcome::Reached));
    }
    let goal_bearing = normalize_angle(dy.atan2(dx) - pose.theta);
    match *state {
        BugState::ToGoal => {
            if cone_min(scan, 0.0, cfg.front_half_angle) < cfg.obstacle_range {
                *state = BugState::Boundary { hit: *pose, hit_dist: dist, departed: false };
                return (wall_follow_command(scan, &cfg.boundary), None);
            }
            let wz = (cfg.heading_gain * goal_bearing).clamp(-cfg.boundary.max_wz, cfg.boundary.max_wz);
            let vx = cfg.speed.min(dist) * goal_bearing.cos().max(0.0);
            (Twist2D::new(vx, 0.0, wz), None)
        }
        BugState::Boundary { hit, hit_dist, ref mut departed } => {
            let from_hit = pose.distance_to(&hit);
            if from_hit > cfg.loop_departure {
                *departed = true;
            }
            if *departed && from_hit < cfg.loop_radius {
                return (Twist2D::zero(), Some(BugOutcome::Unreachable));
            }
            let clear = cone_min(scan, goal_bearing, cfg.clear_half_angle) > dist.min(cfg.boundary.lost_range);
            if dist < hit_dist - cfg.leave_margin && clear {
                *state = BugState::ToGoal;
                return (Twist2D::new(0.0, 0.0, (cfg.heading_gain * goal_bearing).clamp(-1.0, 1.0)), None);
            }
            (wall_follow_command(scan, &cfg.boundary), None)
        }
    }
}

/// Drives towards `goal`, following obstacle boundaries (wall on the left)
/// when blocked. Ends at the goal, after a complete loop around an obstacle,
/// or when `timeout` of wall-clock time elapses.
pub fn bug_navigate(robot: &mut RobotHandle, goal: (f64, f64), cfg: &BugConfig, timeout: Duration) -> Result<BugReport, ClientError> {
    let start = Instant::now();
    robot.subscribe(Channel::Lidar.name())?;
    let wait = robot.timeout();
    let mut state = BugState::ToGoal;
    let mut report = BugReport { outcome: BugOutcome::TimedOut, final_pose: Pose2D::default(), hits: 0, trace: Vec::new() };
    let result = loop {
        if start.elapsed() >= timeout {
            break Ok(());
        }
        let scan = match next_scan(robot, wait) {
            Ok(Some(s)) => s,
            Ok(None) => break Err(ClientError::Timeout { channel: Channel::Lidar.name().into(), waited: wait }),
            Err(e) => break Err(e),
        };
        let pose = match robot.read_pose() {
            Ok(p) => p,
            Err(e) => break Err(e),
        };
        report.final_pose = pose;
        report.trace.push(pose);
        let was_boundary = matches!(state, BugState::Boundary { .. });
        let (cmd, outcome) = bug_step(&mut state, &pose, &scan, goal, cfg);
        if !was_boundary && matches!(state, BugState::Boundary { .. }) {
            report.hits += 1;
        }
        if let Some(o) = outcome {
            report.outcome = o;
            break Ok(());
        }
        if let Err(e) = drive_twist(robot, &cmd) {
            break Err(e);
        }
    };
    robot.unsubscribe(Channel::Lidar.name())?;
    robot.stop()?;
    result.map(|()| report)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;

    fn ring_scan(range_at: impl Fn(f64) -> f64) -> LidarScan {
        let thetas: Vec<f64> = (0..360).map(|i| normalize_angle(i as f64 * PI / 180.0)).collect();
        let ranges = thetas.iter().map(|&t| range_at(t)).collect();
        LidarScan { utime: 0, num_ranges: thetas.len(), ranges, thetas }
    }

    #[test]
    fn aligned_wall_at_set_distance_drives_straight() {
        // Wall on the left: nearest return straight out at +90 degrees.
        let scan = ring_scan(|t| if (t - FRAC_PI_2).abs() < 1e-9 { 0.5 } else { 5.0 });
        let cmd = wall_follow_command(&scan, &WallFollowConfig::default());
        assert!((cmd.vx - 0.2).abs() < 1e-12);
        assert!(cmd.wz.abs() < 1e-12);
    }

    #[test]
    fn too_far_turns_towards_wall_and_lost_wall_rotates() {
        let cfg = WallFollowConfig::default();
        let far = ring_scan(|t| if (t - FRAC_PI_2).abs() < 1e-9 { 0.8 } else { 5.0 });
        assert!(wall_follow_command(&far, &cfg).wz > 0.0);
        let none = ring_scan(|_| 3.0);
        let cmd = wall_follow_command(&none, &cfg);
        assert_eq!((cmd.vx, cmd.wz), (0.0, cfg.search_wz));
    }

    #[test]
    fn wall_ahead_stops_forward_motion() {
        let scan = ring_scan(|t| if t.abs() < 1e-9 { 0.3 } else { 5.0 });
        let cmd = wall_follow_command(&scan, &WallFollowConfig::default());
        assert!(cmd.vx.abs() < 1e-12);
        assert!(cmd.wz < 0.0);
    }

    #[test]
    fn bug_switches_to_boundary_and_detects_loop() {
        let cfg = BugConfig::default();
        let mut state = BugState::ToGoal;
        let blocked = ring_scan(|t| if t.abs() < 0.1 { 0.3 } else { 5.0 });
        let p0 = Pose2D::new(0.0, 0.0, 0.0);
        let (_, o) = bug_step(&mut state, &p0, &blocked, (3.0, 0.0), &cfg);
        assert!(o.is_none());
        assert!(matches!(state, BugState::Boundary { .. }));
        let wall_left = ring_scan(|t| if (t - FRAC_PI_2).abs() < 0.1 { 0.45 } else { 5.0 });
        let away = Pose2D::new(0.0, 1.0, 0.0);
        assert_eq!(bug_step(&mut state, &away, &wall_left, (3.0, 0.0), &cfg).1, None);
        let back = Pose2D::new(0.05, 0.05, 0.0);
        assert_eq!(bug_step(&mut state, &back, &wall_left, (3.0, 0.0), &cfg).1, Some(BugOutcome::Unreachable));
    }

    #[test]
    fn bug_heads_straight_for_visible_goal() {
        let mut state = BugState::ToGoal;
        let open = ring_scan(|_| 5.0);
        let (cmd, o) = bug_step(&mut state, &Pose2D::new(0.0, 0.0, 0.0), &open, (2.0, 0.0), &BugConfig::default());
        assert!(o.is_none());
        assert!(cmd.vx > 0.0 && cmd.wz.abs() < 1e-12);
        let (_, o) = bug_step(&mut state, &Pose2D::new(1.9, 0.0, 0.0), &open, (2.0, 0.0), &BugConfig::default());
        assert_eq!(o, Some(BugOutcome::Reached));
    }
}
