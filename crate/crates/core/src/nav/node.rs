use std::collections::VecDeque;

use super::tracker::{PathTracker, TrackerConfig};
use crate::bus::{Bus, BusError, Subscription};
use crate::messages::{Channel, Path2D, SlamMode, SlamModeCommand};
use crate::{Pose2D, Twist2D};

/// SLAM poses older than this, relative to the newest odometry, are ignored.
const SLAM_STALE_US: u64 = 500_000;
const ODOM_HISTORY: usize = 128;

/// Runs a [`PathTracker`] on the bus: follows paths from CONTROLLER_PATH and
/// publishes MBOT_VEL_CMD while a path is active, then one zero twist.
///
/// The robot pose is the latest SLAM_POSE advanced by the odometry motion since
/// that pose's timestamp. When SLAM is idle or has gone quiet, odometry alone
/// is used.
pub struct TrackerNode {
    tracker: PathTracker,
    bus: Bus,
    path: Subscription,
    slam_pose: Subscription,
    odom: Subscription,
    mode: Subscription,
    slam_mode: SlamMode,
    last_slam: Option<Pose2D>,
    odom_history: VecDeque<Pose2D>,
}

impl TrackerNode {
    pub fn new(cfg: TrackerConfig, bus: &Bus, initial_mode: SlamMode) -> Result<Self, BusError> {
        Ok(Self {
            tracker: PathTracker::new(cfg),
            path: bus.subscribe(Channel::ControllerPath, 4)?,
            slam_pose: bus.subscribe(Channel::SlamPose, 16)?,
            odom: bus.subscribe(Channel::Odometry, 64)?,
            mode: bus.subscribe(Channel::SlamMode, 16)?,
            bus: bus.clone(),
            slam_mode: initial_mode,
            last_slam: None,
            odom_history: VecDeque::with_capacity(ODOM_HISTORY),
        })
    }

    pub fn tracker(&self) -> &PathTracker {
        &self.tracker
    }

    pub fn is_active(&self) -> bool {
        !self.tracker.is_done()
    }

    /// Best current pose estimate, if any pose source has reported.
    pub fn pose_estimate(&self) -> Option<Pose2D> {
        let odom = *self.odom_history.back()?;
        let Some(slam) = self.last_slam else { return Some(odom) };
        if self.slam_mode == SlamMode::Idle || odom.utime.saturating_sub(slam.utime) > SLAM_STALE_US {
            return Some(odom);
        }
        let then = self
            .odom_history
            .iter()
            .min_by_key(|p| p.utime.abs_diff(slam.utime))
            .copied()
            .unwrap_or(odom);
        Some(slam.compose(&odom.relative_to(&then)))
    }

    /// One control period. Returns the published command, if any.
    pub fn poll(&mut self) -> Result<Option<Twist2D>, BusError> {
        for m in self.odom.drain() {
            if self.odom_history.len() == ODOM_HISTORY {
                self.odom_history.pop_front();
            }
            self.odom_history.push_back(m.decode()?);
        }
        if let Some(m) = self.slam_pose.take_latest() {
            self.last_slam = Some(m.decode()?);
        }
        for m in self.mode.drain() {
            self.slam_mode = m.decode::<SlamModeCommand>()?.mode;
        }
        if let Some(m) = self.path.take_latest() {
            let path: Path2D = m.decode()?;
            log::info!("tracking path with {} waypoints", path.poses.len());
            let was_active = self.is_active();
            self.tracker.set_path(path);
            if was_active && !self.is_active() {
                return self.send(Twist2D::zero()).map(Some);
            }
        }
        if !self.is_active() {
            return Ok(None);
        }
        let Some(pose) = self.pose_estimate() else { return Ok(None) };
        let cmd = self.tracker.step(&pose);
        self.send(cmd).map(Some)
    }

    fn send(&self, cmd: Twist2D) -> Result<Twist2D, BusError> {
        let cmd = cmd.with_utime(self.bus.now_utime());
        self.bus.publish(Channel::MbotVelCmd, &cmd)?;
        Ok(cmd)
    }
}
