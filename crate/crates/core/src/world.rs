//! Ground-truth world: integrates true robot motion from the emulated board's
//! wheels, blocks motion at solid cells, and synthesizes lidar scans.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::board::{forward_kinematics, BoardError, ControlBoard};
use crate::geometry::normalize_angle;
use crate::grid::{Cell, DEFAULT_OCCUPIED_THRESHOLD};
use crate::messages::LidarScan;
use crate::{OccupancyGrid, Pose2D};

/// Longest integration substep, seconds.
pub const MAX_SUBSTEP: f64 = 1e-3;
/// Longest accepted `step` interval, seconds.
pub const MAX_STEP: f64 = 0.1;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("step interval must be in (0, {MAX_STEP}] s, got {0}")]
    BadStep(f64),
    #[error("start pose ({x:.3}, {y:.3}) is outside the world or inside a solid cell")]
    BlockedStart { x: f64, y: f64 },
    #[error(transparent)]
    Board(#[from] BoardError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LidarConfig {
    pub num_beams: usize,
    pub max_range: f64,
    pub scan_rate_hz: f64,
}

impl Default for LidarConfig {
    fn default() -> Self {
        Self { num_beams: 360, max_range: 12.0, scan_rate_hz: 10.0 }
    }
}

/// Sensor noise injected by the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    /// Relative standard deviation of measured against true wheel rotation.
    pub encoder_slip_sigma: f64,
    /// Lidar range noise standard deviation, meters.
    pub lidar_range_sigma: f64,
    /// Probability that a beam returns nothing.
    pub beam_dropout: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { encoder_slip_sigma: 0.02, lidar_range_sigma: 0.01, beam_dropout: 0.02 }
    }
}

impl NoiseConfig {
    pub fn none() -> Self {
        Self { encoder_slip_sigma: 0.0, lidar_range_sigma: 0.0, beam_dropout: 0.0 }
    }
}

#[derive(Debug, Clone)]
pub struct WorldSim {
    world: OccupancyGrid,
    threshold: i8,
    true_pose: Pose2D,
    sim_time_us: u64,
    board: ControlBoard,
    lidar: LidarConfig,
    noise: NoiseConfig,
    rng: ChaCha8Rng,
    collisions: u64,
    stepped: bool,
}

impl WorldSim {
    /// The board's odometry starts at `start` so odometry and world frames coincide.
    pub fn new(
        world: OccupancyGrid,
        start: Pose2D,
        mut board: ControlBoard,
        lidar: LidarConfig,
        noise: NoiseConfig,
        seed: u64,
    ) -> Result<Self, WorldError> {
        if !world.is_free_pose(&start, DEFAULT_OCCUPIED_THRESHOLD) {
            return Err(WorldError::BlockedStart { x: start.x, y: start.y });
        }
        let start = Pose2D { theta: normalize_angle(start.theta), utime: 0, ..start };
        board.set_utime(0);
        board.reset_odometry(start);
        Ok(Self {
            world,
            threshold: DEFAULT_OCCUPIED_THRESHOLD,
            true_pose: start,
            sim_time_us: 0,
            board,
            lidar,
            noise,
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_1da7),
            collisions: 0,
            stepped: false,
        })
    }

    pub fn world(&self) -> &OccupancyGrid {
        &self.world
    }

    pub fn true_pose(&self) -> Pose2D {
        self.true_pose
    }

    pub fn sim_time_us(&self) -> u64 {
        self.sim_time_us
    }

    pub fn board(&self) -> &ControlBoard {
        &self.board
    }

    pub fn board_mut(&mut self) -> &mut ControlBoard {
        &mut self.board
    }

    pub fn lidar_config(&self) -> &LidarConfig {
        &self.lidar
    }

    /// Substeps in which motion was blocked by a solid cell.
    pub fn collisions(&self) -> u64 {
        self.collisions
    }

    /// Advances the simulation by `dt` seconds in substeps of at most 1 ms.
    pub fn step(&mut self, dt: f64) -> Result<(), WorldError> {
        if !(dt > 0.0 && dt <= MAX_STEP + 1e-12) {
            return Err(WorldError::BadStep(dt));
        }
        self.stepped = true;
        let n = (dt / MAX_SUBSTEP).ceil().max(1.0) as usize;
        let h = dt / n as f64;
        let cfg = *self.board.config();
        for _ in 0..n {
            let inc = self.board.advance(h)?;
            // increments over the substep are displacements
            let d = forward_kinematics(&cfg, &inc).map_err(BoardError::from)?;
            self.integrate(d.vx, d.vy, d.wz);
        }
        self.sim_time_us += (dt * 1e6).round() as u64;
        self.board.set_utime(self.sim_time_us);
        self.true_pose.utime = self.sim_time_us;
        Ok(())
    }

    fn integrate(&mut self, dx_body: f64, dy_body: f64, dtheta: f64) {
        let p = self.true_pose;
        let (s, c) = (p.theta + dtheta / 2.0).sin_cos();
        let dx = dx_body * c - dy_body * s;
        let dy = dx_body * s + dy_body * c;
        let theta = normalize_angle(p.theta + dtheta);
        let free = |x: f64, y: f64| self.world.is_free_pose(&Pose2D::new(x, y, 0.0), self.threshold);
        let (x, y) = if free(p.x + dx, p.y + dy) {
            (p.x + dx, p.y + dy)
        } else {
            self.collisions += 1;
            if dx != 0.0 && free(p.x + dx, p.y) {
                (p.x + dx, p.y)
            } else if dy != 0.0 && free(p.x, p.y + dy) {
                (p.x, p.y + dy)
            } else {
                (p.x, p.y)
            }
        };
        self.true_pose = Pose2D { x, y, theta, utime: p.utime };
    }

    /// Ideal range from `from` along robot-frame `bearing`.
    pub fn raycast(&self, from: &Pose2D, bearing: f64, max_range: f64) -> f64 {
        self.world.raycast(from.x, from.y, from.theta + bearing, max_range, self.threshold)
    }

    /// Evenly spaced beams from the true pose, with configured noise and dropout.
    pub fn make_scan(&mut self) -> LidarScan {
        let n = self.lidar.num_beams;
        let max = self.lidar.max_range;
        let pose = self.true_pose;
        let noise = (self.noise.lidar_range_sigma > 0.0)
            .then(|| Normal::new(0.0, self.noise.lidar_range_sigma).expect("finite sigma"));
        let mut ranges = Vec::with_capacity(n);
        let mut thetas = Vec::with_capacity(n);
        for i in 0..n {
            let bearing = normalize_angle(std::f64::consts::TAU * i as f64 / n as f64);
            thetas.push(bearing);
            if self.noise.beam_dropout > 0.0 && self.rng.gen::<f64>() < self.noise.beam_dropout {
                ranges.push(0.0);
                continue;
            }
            let r = self.raycast(&pose, bearing, max);
            let r = match &noise {
                Some(d) if r < max => (r + d.sample(&mut self.rng)).clamp(1e-3, max),
                _ => r,
            };
            ranges.push(r);
        }
        LidarScan { utime: self.sim_time_us, ranges, thetas, num_ranges: n }
    }

    pub fn has_stepped(&self) -> bool {
        self.stepped
    }
}

/// Square room of interior side `size_m` with one-cell walls just outside
/// `[0, size_m]` on both axes.
pub fn walled_room(size_m: f64, resolution: f64) -> OccupancyGrid {
    let n = (size_m / resolution).round() as usize + 2;
    let mut g = OccupancyGrid::new(-resolution, -resolution, resolution, n, n).expect("positive resolution");
    for i in 0..n {
        for c in [Cell::new(i, 0), Cell::new(i, n - 1), Cell::new(0, i), Cell::new(n - 1, i)] {
            g.set(c, 127);
        }
    }
    g
}

/// Circular room of the given radius centred on the origin. Everything outside
/// the circle is solid.
pub fn round_room(radius: f64, resolution: f64) -> OccupancyGrid {
    let n = (2.0 * radius / resolution).ceil() as usize + 4;
    let origin = -(n as f64) * resolution / 2.0;
    let mut g = OccupancyGrid::new(origin, origin, resolution, n, n).expect("positive resolution");
    let geom = g.geometry();
    for r in 0..n {
        for c in 0..n {
            let cell = Cell::new(c, r);
            let (x, y) = geom.cell_to_world(cell).expect("in bounds");
            if x.hypot(y) > radius {
                g.set(cell, 127);
            }
        }
    }
    g
}

/// Marks the axis-aligned box `[x0, x1] x [y0, y1]` solid.
pub fn add_box(grid: &mut OccupancyGrid, x0: f64, y0: f64, x1: f64, y1: f64) {
    let geom = grid.geometry();
    let (c0, r0) = geom.world_to_cell_unbounded(x0, y0);
    let (c1, r1) = geom.world_to_cell_unbounded(x1, y1);
    for r in r0.min(r1)..=r0.max(r1) {
        for c in c0.min(c1)..=c0.max(c1) {
            if let Some(cell) = geom.cell_checked(c, r) {
                grid.set(cell, 127);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::board::DriveConfig;
    use crate::Twist2D;

    fn room(res: f64, size_m: f64) -> OccupancyGrid {
        walled_room(size_m, res)
    }

    fn sim(world: OccupancyGrid, start: Pose2D, noise: NoiseConfig) -> WorldSim {
        let board = ControlBoard::new(DriveConfig::differential(0.05, 0.1, 1000), 0.0, noise.encoder_slip_sigma, 3).unwrap();
        WorldSim::new(world, start, board, LidarConfig::default(), noise, 11).unwrap()
    }

    #[test]
    fn zero_speed_holds_pose() {
        let mut s = sim(room(0.05, 10.0), Pose2D::new(5.0, 5.0, 0.4), NoiseConfig::none());
        for _ in 0..10 {
            s.step(0.1).unwrap();
        }
        let p = s.true_pose();
        assert_eq!((p.x, p.y, p.theta), (5.0, 5.0, 0.4));
        assert_eq!(s.sim_time_us(), 1_000_000);
    }

    #[test]
    fn straight_drive_constant_velocity() {
        let mut s = sim(room(0.05, 10.0), Pose2D::new(2.0, 5.0, 0.0), NoiseConfig::none());
        s.board_mut().command_twist(&Twist2D::new(0.5, 0.0, 0.0)).unwrap();
        for _ in 0..20 {
            s.step(0.1).unwrap();
        }
        assert!((s.true_pose().x - 3.0).abs() < 1e-6, "{:?}", s.true_pose());
        assert!(s.true_pose().y == 5.0);
    }

    #[test]
    fn wall_stops_motion_without_penetration() {
        let world = room(0.05, 10.0);
        let mut s = sim(world.clone(), Pose2D::new(9.7, 5.0, 0.0), NoiseConfig::none());
        s.board_mut().command_twist(&Twist2D::new(0.5, 0.0, 0.0)).unwrap();
        for _ in 0..200 {
            s.step(0.01).unwrap();
            assert!(world.is_free_pose(&s.true_pose(), 64));
        }
        let p = s.true_pose();
        assert!(p.x < 10.0 && p.x > 10.0 - 0.001, "{p:?}");
        assert!(s.collisions() > 0);
    }

    #[test]
    fn rejects_bad_steps_and_blocked_start() {
        let mut s = sim(room(0.05, 10.0), Pose2D::new(5.0, 5.0, 0.0), NoiseConfig::none());
        assert!(s.step(0.0).is_err());
        assert!(s.step(0.2).is_err());
        let board = ControlBoard::new(DriveConfig::default(), 0.0, 0.0, 1).unwrap();
        assert!(WorldSim::new(room(0.05, 10.0), Pose2D::new(-0.02, 5.0, 0.0), board, LidarConfig::default(), NoiseConfig::none(), 1).is_err());
    }

    #[test]
    fn symmetric_room_cardinal_beams_equal() {
        let mut s = sim(room(0.05, 10.0), Pose2D::new(5.0, 5.0, 0.0), NoiseConfig::none());
        s.step(0.01).unwrap();
        let scan = s.make_scan();
        assert!(scan.is_consistent());
        let r: Vec<f64> = [0, 90, 180, 270].iter().map(|&i| scan.ranges[i]).collect();
        for v in &r {
            assert!((v - r[0]).abs() < 1e-9, "{r:?}");
        }
        assert!((r[0] - 5.0).abs() < 1e-9);
    }

    #[test]
    fn full_dropout_invalidates_all() {
        let noise = NoiseConfig { beam_dropout: 1.0, ..NoiseConfig::none() };
        let mut s = sim(room(0.05, 10.0), Pose2D::new(5.0, 5.0, 0.0), noise);
        s.step(0.01).unwrap();
        assert!(s.make_scan().ranges.iter().all(|&r| r <= 0.0));
    }

    #[test]
    fn range_noise_is_unbiased() {
        let noise = NoiseConfig { lidar_range_sigma: 0.01, ..NoiseConfig::none() };
        let board = ControlBoard::new(DriveConfig::differential(0.05, 0.1, 1000), 0.0, 0.0, 3).unwrap();
        let lidar = LidarConfig { num_beams: 4, ..LidarConfig::default() };
        let mut s = WorldSim::new(room(0.05, 10.0), Pose2D::new(5.0, 5.0, 0.0), board, lidar, noise, 5).unwrap();
        s.step(0.01).unwrap();
        let mut sum = 0.0;
        let mut n = 0usize;
        while n < 100_000 {
            let scan = s.make_scan();
            sum += scan.ranges.iter().sum::<f64>();
            n += scan.num_ranges;
        }
        let mean = sum / n as f64;
        let bound = 3.0 * 0.01 / (n as f64).sqrt();
        assert!((mean - 5.0).abs() < bound, "mean {mean} bound {bound}");
    }

    #[test]
    fn seeded_runs_are_bit_identical() {
        let run = || {
            let mut s = sim(room(0.05, 10.0), Pose2D::new(3.0, 3.0, 0.2), NoiseConfig::default());
            s.board_mut().command_twist(&Twist2D::new(0.3, 0.0, 0.4)).unwrap();
            let mut scans = Vec::new();
            for _ in 0..30 {
                s.step(0.1).unwrap();
                scans.push(s.make_scan().ranges);
            }
            (s.true_pose(), s.board().odometry(), scans)
        };
        assert_eq!(run(), run());
    }
}
