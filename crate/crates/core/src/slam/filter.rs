use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mapping::{update_map, MappingConfig};
use super::particles::{
    apply_action_model, apply_sensor_model, low_variance_resample, ActionModelConfig, ParticleSet, SensorModelConfig,
};
use crate::messages::{LidarScan, SlamMode};
use crate::{OccupancyGrid, Pose2D};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SlamConfig {
    pub num_particles: usize,
    pub init_sigma_xy: f64,
    pub init_sigma_theta_deg: f64,
    /// Resample when N_eff drops below this fraction of N.
    pub resample_fraction: f64,
    pub map_publish_rate_hz: f64,
    pub action: ActionModelConfig,
    pub sensor: SensorModelConfig,
    pub mapping: MappingConfig,
}

impl Default for SlamConfig {
    fn default() -> Self {
        Self {
            num_particles: 300,
            init_sigma_xy: 0.1,
            init_sigma_theta_deg: 10.0,
            resample_fraction: 0.5,
            map_publish_rate_hz: 2.0,
            action: ActionModelConfig::default(),
            sensor: SensorModelConfig::default(),
            mapping: MappingConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SlamStats {
    pub updates: u64,
    pub resamples: u64,
    pub sensor_fallbacks: u64,
    pub map_updates: u64,
}

/// Output of one scan update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlamStep {
    pub pose: Option<Pose2D>,
    pub map_changed: bool,
}

/// Monte Carlo localization with log-odds mapping, switchable between idle,
/// localization against a frozen map, and full mapping.
#[derive(Debug, Clone)]
pub struct Slam {
    cfg: SlamConfig,
    mode: SlamMode,
    map: OccupancyGrid,
    particles: ParticleSet,
    last_odom: Option<Pose2D>,
    pose: Option<Pose2D>,
    rng: ChaCha8Rng,
    stats: SlamStats,
}

impl Slam {
    pub fn new(cfg: SlamConfig, map: OccupancyGrid, seed: u64) -> Self {
        Self {
            cfg,
            mode: SlamMode::Idle,
            map,
            particles: ParticleSet::default(),
            last_odom: None,
            pose: None,
            rng: ChaCha8Rng::seed_from_u64(seed),
            stats: SlamStats::default(),
        }
    }

    pub fn config(&self) -> &SlamConfig {
        &self.cfg
    }

    pub fn mode(&self) -> SlamMode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: SlamMode) {
        self.mode = mode;
    }

    pub fn map(&self) -> &OccupancyGrid {
        &self.map
    }

    pub fn particles(&self) -> &ParticleSet {
        &self.particles
    }

    /// Last published posterior.
    pub fn pose(&self) -> Option<Pose2D> {
        self.pose
    }

    pub fn stats(&self) -> SlamStats {
        self.stats
    }

    /// Replaces the particle cloud with a fresh Gaussian around `pose`.
    pub fn initialize_at(&mut self, pose: Pose2D) {
        self.particles = ParticleSet::gaussian(
            &pose,
            self.cfg.num_particles,
            self.cfg.init_sigma_xy,
            self.cfg.init_sigma_theta_deg.to_radians(),
            &mut self.rng,
        );
        self.last_odom = Some(pose);
        self.pose = Some(pose);
    }

    /// Clears the map and reinitializes the particles at `odom`.
    pub fn reset(&mut self, odom: Pose2D) {
        self.map.clear();
        self.initialize_at(odom);
    }

    /// Processes one scan with the odometry pose current at scan time.
    pub fn step(&mut self, scan: &LidarScan, odom: &Pose2D) -> SlamStep {
        if self.mode == SlamMode::Idle {
            return SlamStep { pose: self.pose, map_changed: false };
        }
        if self.particles.is_empty() {
            self.initialize_at(*odom);
        }
        let prev = self.last_odom.unwrap_or(*odom);
        self.last_odom = Some(*odom);
        apply_action_model(&mut self.particles, &prev, odom, &self.cfg.action, &mut self.rng);
        self.stats.updates += 1;

        let map_changed = if self.mode == SlamMode::FullSlam && self.map.is_blank() {
            update_map(&mut self.map, odom, scan, &self.cfg.mapping);
            // The new map is anchored at this pose, so the cloud collapses onto it.
            self.particles = ParticleSet::gaussian(odom, self.cfg.num_particles, 0.0, 0.0, &mut self.rng);
            self.pose = Some(*odom);
            true
        } else {
            if !self.map.is_blank() {
                self.localize(scan);
            }
            self.pose = self.particles.posterior();
            match (self.mode, self.pose) {
                (SlamMode::FullSlam, Some(p)) => {
                    update_map(&mut self.map, &p, scan, &self.cfg.mapping);
                    true
                }
                _ => false,
            }
        };
        if map_changed {
            self.stats.map_updates += 1;
        }
        if let Some(p) = self.pose.as_mut() {
            p.utime = scan.utime;
        }
        SlamStep { pose: self.pose, map_changed }
    }

    fn localize(&mut self, scan: &LidarScan) {
        let u = apply_sensor_model(&mut self.particles, scan, &self.map, &self.cfg.sensor);
        if u.fell_back {
            self.stats.sensor_fallbacks += 1;
        }
        let n = self.particles.len() as f64;
        if self.particles.effective_sample_size() < self.cfg.resample_fraction * n {
            low_variance_resample(&mut self.particles, &mut self.rng);
            self.stats.resamples += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Cell;

    fn room() -> OccupancyGrid {
        let mut g = OccupancyGrid::new(0.0, 0.0, 0.05, 60, 60).unwrap();
        for i in 0..60 {
            for c in [Cell::new(i, 0), Cell::new(i, 59), Cell::new(0, i), Cell::new(59, i)] {
                g.set(c, 127);
            }
        }
        g
    }

    fn scan_from(map: &OccupancyGrid, pose: &Pose2D) -> LidarScan {
        let thetas: Vec<f64> = (0..180).map(|i| crate::normalize_angle(i as f64 * std::f64::consts::TAU / 180.0)).collect();
        let ranges = thetas.iter().map(|t| map.raycast(pose.x, pose.y, pose.theta + t, 12.0, 64)).collect();
        LidarScan { utime: 7, ranges, thetas, num_ranges: 180 }
    }

    #[test]
    fn idle_changes_nothing() {
        let mut s = Slam::new(SlamConfig::default(), room(), 1);
        let before = (s.map().clone(), s.particles().clone(), s.pose());
        let p = Pose2D::new(1.5, 1.5, 0.0);
        let out = s.step(&scan_from(&room(), &p), &p);
        assert_eq!(out, SlamStep { pose: None, map_changed: false });
        assert_eq!((s.map().clone(), s.particles().clone(), s.pose()), before);
    }

    #[test]
    fn full_slam_bootstraps_from_odometry() {
        let truth = room();
        let mut s = Slam::new(SlamConfig::default(), OccupancyGrid::new(0.0, 0.0, 0.05, 60, 60).unwrap(), 2);
        s.set_mode(SlamMode::FullSlam);
        let p = Pose2D::new(1.5, 1.5, 0.0);
        let out = s.step(&scan_from(&truth, &p), &p);
        assert!(out.map_changed);
        assert_eq!(out.pose, Some(Pose2D { utime: 7, ..p }));
        assert!(!s.map().is_blank());
    }

    #[test]
    fn localization_only_keeps_map() {
        let mut s = Slam::new(SlamConfig::default(), room(), 3);
        s.set_mode(SlamMode::LocalizationOnly);
        let p = Pose2D::new(1.5, 1.5, 0.0);
        for _ in 0..5 {
            let out = s.step(&scan_from(&room(), &p), &p);
            assert!(!out.map_changed);
            assert!((s.particles().weight_sum() - 1.0).abs() < 1e-9);
        }
        assert_eq!(s.map(), &room());
        assert!(s.pose().unwrap().distance_to(&p) < 0.05);
    }

    #[test]
    fn reset_clears_map_and_recenters() {
        let mut s = Slam::new(SlamConfig::default(), room(), 4);
        let odom = Pose2D::new(2.0, 1.0, 0.3);
        s.reset(odom);
        assert!(s.map().is_blank());
        assert_eq!(s.particles().len(), 300);
        let post = s.particles().posterior().unwrap();
        assert!(post.distance_to(&odom) < 0.05);
    }
}
