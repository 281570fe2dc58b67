use super::filter::{Slam, SlamStep};
use crate::bus::{Bus, BusError, Subscription};
use crate::messages::{Channel, LidarScan, SlamModeCommand};
use crate::Pose2D;

/// Runs [`Slam`] against the bus: LIDAR and ODOMETRY in, SLAM_POSE and
/// SLAM_MAP out. Mode and reset commands take effect before the next scan.
pub struct SlamNode {
    slam: Slam,
    bus: Bus,
    lidar: Subscription,
    odom: Subscription,
    mode: Subscription,
    reset: Subscription,
    last_odom: Option<Pose2D>,
    map_period_us: u64,
    next_map_utime: Option<u64>,
    map_dirty: bool,
}

impl SlamNode {
    pub fn new(slam: Slam, bus: &Bus) -> Result<Self, BusError> {
        let rate = slam.config().map_publish_rate_hz;
        let map_period_us = if rate > 0.0 { (1e6 / rate).round() as u64 } else { u64::MAX };
        Ok(Self {
            lidar: bus.subscribe(Channel::Lidar, 4)?,
            odom: bus.subscribe(Channel::Odometry, 64)?,
            mode: bus.subscribe(Channel::SlamMode, 16)?,
            reset: bus.subscribe(Channel::SlamReset, 16)?,
            bus: bus.clone(),
            map_dirty: !slam.map().is_blank(),
            slam,
            last_odom: None,
            map_period_us,
            next_map_utime: None,
        })
    }

    pub fn slam(&self) -> &Slam {
        &self.slam
    }

    pub fn into_slam(self) -> Slam {
        self.slam
    }

    /// Applies pending commands, then processes the newest pending scan.
    /// Returns whether a scan was processed.
    pub fn poll(&mut self) -> Result<bool, BusError> {
        if let Some(m) = self.odom.take_latest() {
            self.last_odom = Some(m.decode()?);
        }
        for m in self.mode.drain() {
            let cmd: SlamModeCommand = m.decode()?;
            log::info!("SLAM mode -> {:?}", cmd.mode);
            self.slam.set_mode(cmd.mode);
        }
        if !self.reset.drain().is_empty() {
            let odom = self.last_odom.unwrap_or_default();
            log::info!("SLAM reset at ({:.3}, {:.3})", odom.x, odom.y);
            self.slam.reset(odom);
            self.map_dirty = true;
        }
        let Some(msg) = self.lidar.take_latest() else { return Ok(false) };
        let scan: LidarScan = msg.decode()?;
        let Some(odom) = self.last_odom else { return Ok(false) };
        let SlamStep { pose, map_changed } = self.slam.step(&scan, &odom);
        self.map_dirty |= map_changed;
        if let Some(p) = pose {
            self.bus.publish(Channel::SlamPose, &p)?;
        }
        let now = scan.utime;
        let due = self.next_map_utime.map_or(true, |t| now >= t);
        if due && self.map_dirty {
            self.bus.publish(Channel::SlamMap, self.slam.map())?;
            self.map_dirty = false;
            self.next_map_utime = Some(now.saturating_add(self.map_period_us));
        }
        Ok(true)
    }
}
