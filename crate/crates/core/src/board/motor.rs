use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use super::kinematics::{inverse_kinematics, DriveConfig, KinematicsError};
use super::odometry::dead_reckon;
use crate::messages::{EncoderReading, WheelCommand};
use crate::{Pose2D, Twist2D};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoardError {
    #[error("step interval must be positive, got {0}")]
    BadInterval(f64),
    #[error("board has {expected} motor channels in use, command has {got}")]
    ChannelCount { expected: usize, got: usize },
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
}

/// Emulated motor-controller board: first-order wheel dynamics, quadrature
/// encoder counting and board-side dead reckoning.
#[derive(Debug, Clone)]
pub struct ControlBoard {
    cfg: DriveConfig<f64>,
    time_constant: f64,
    slip: Option<Normal<f64>>,
    rng: ChaCha8Rng,
    setpoints: Vec<f64>,
    velocity: Vec<f64>,
    true_angle: Vec<f64>,
    measured_angle: Vec<f64>,
    ticks: Vec<i64>,
    odom_ticks: Vec<i64>,
    odometry: Pose2D,
    utime: u64,
    rejected_commands: u64,
}

impl ControlBoard {
    /// `time_constant` of zero gives ideal wheels that track setpoints instantly.
    /// `slip_sigma` is the relative standard deviation of encoder-measured wheel
    /// rotation against true rotation.
    pub fn new(cfg: DriveConfig<f64>, time_constant: f64, slip_sigma: f64, seed: u64) -> Result<Self, BoardError> {
        cfg.validate()?;
        let n = cfg.wheel_count();
        let slip = (slip_sigma > 0.0).then(|| Normal::new(0.0, slip_sigma).expect("finite sigma"));
        Ok(Self {
            cfg,
            time_constant: time_constant.max(0.0),
            slip,
            rng: ChaCha8Rng::seed_from_u64(seed),
            setpoints: vec![0.0; n],
            velocity: vec![0.0; n],
            true_angle: vec![0.0; n],
            measured_angle: vec![0.0; n],
            ticks: vec![0; n],
            odom_ticks: vec![0; n],
            odometry: Pose2D::default(),
            utime: 0,
            rejected_commands: 0,
        })
    }

    pub fn config(&self) -> &DriveConfig<f64> {
        &self.cfg
    }

    pub fn set_setpoints(&mut self, cmd: &WheelCommand) -> Result<(), BoardError> {
        if cmd.speeds.len() != self.setpoints.len() {
            self.rejected_commands += 1;
            return Err(BoardError::ChannelCount { expected: self.setpoints.len(), got: cmd.speeds.len() });
        }
        let max = self.cfg.max_wheel_speed;
        for (sp, &s) in self.setpoints.iter_mut().zip(&cmd.speeds) {
            *sp = if s.is_finite() { s.clamp(-max, max) } else { 0.0 };
        }
        Ok(())
    }

    /// Converts a body twist to wheel setpoints. Rejected twists leave the
    /// current setpoints untouched and count against `rejected_commands`.
    pub fn command_twist(&mut self, twist: &Twist2D) -> Result<(), BoardError> {
        match inverse_kinematics(&self.cfg, twist) {
            Ok(speeds) => self.set_setpoints(&WheelCommand { utime: twist.utime, speeds }),
            Err(e) => {
                self.rejected_commands += 1;
                Err(e.into())
            }
        }
    }

    /// Integrates wheel dynamics over `dt` seconds and returns the true wheel
    /// rotation increments (radians) per channel.
    pub fn advance(&mut self, dt: f64) -> Result<Vec<f64>, BoardError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(BoardError::BadInterval(dt));
        }
        let decay = if self.time_constant > 0.0 { (-dt / self.time_constant).exp() } else { 0.0 };
        let mut increments = Vec::with_capacity(self.velocity.len());
        for i in 0..self.velocity.len() {
            let sp = self.setpoints[i];
            let v0 = self.velocity[i];
            // exact solution of dv/dt = (sp - v) / tau over the interval
            let inc = sp * dt + (v0 - sp) * self.time_constant * (1.0 - decay);
            self.velocity[i] = sp + (v0 - sp) * decay;
            self.true_angle[i] += inc;
            let measured = match &self.slip {
                Some(n) => inc * (1.0 + n.sample(&mut self.rng)),
                None => inc,
            };
            self.measured_angle[i] += measured;
            self.ticks[i] = (self.measured_angle[i] / std::f64::consts::TAU * self.cfg.encoder_resolution as f64).round() as i64;
            increments.push(inc);
        }
        let dt_us = ((dt * 1e6).round() as u64).max(1);
        self.utime += dt_us;
        let deltas: Vec<i64> = self.ticks.iter().zip(&self.odom_ticks).map(|(t, o)| t - o).collect();
        if deltas.iter().any(|&d| d != 0) {
            if let Ok(p) = dead_reckon(&self.cfg, &self.odometry, &deltas, dt_us) {
                self.odometry = p;
            }
            self.odom_ticks.clone_from(&self.ticks);
        }
        self.odometry.utime = self.utime;
        Ok(increments)
    }

    /// Applies `cmd`, advances `dt` and reports cumulative encoder ticks.
    pub fn step(&mut self, dt: f64, cmd: &WheelCommand) -> Result<EncoderReading, BoardError> {
        self.set_setpoints(cmd)?;
        self.advance(dt)?;
        Ok(EncoderReading { utime: self.utime, ticks: self.ticks.clone(), delta_time: ((dt * 1e6).round() as u64).max(1) })
    }

    pub fn wheel_velocities(&self) -> &[f64] {
        &self.velocity
    }

    pub fn setpoints(&self) -> &[f64] {
        &self.setpoints
    }

    pub fn ticks(&self) -> &[i64] {
        &self.ticks
    }

    pub fn odometry(&self) -> Pose2D {
        self.odometry
    }

    /// Sets the pose dead reckoning starts from.
    pub fn reset_odometry(&mut self, pose: Pose2D) {
        self.odometry = Pose2D { utime: self.utime, ..pose };
        self.odom_ticks.clone_from(&self.ticks);
    }

    pub fn utime(&self) -> u64 {
        self.utime
    }

    pub fn set_utime(&mut self, utime: u64) {
        self.utime = utime;
    }

    pub fn rejected_commands(&self) -> u64 {
        self.rejected_commands
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::TAU;

    use super::*;

    fn cmd(speeds: &[f64]) -> WheelCommand {
        WheelCommand { utime: 0, speeds: speeds.to_vec() }
    }

    #[test]
    fn rest_stays_at_rest() {
        let mut b = ControlBoard::new(DriveConfig::differential(0.05, 0.1, 48), 0.05, 0.0, 1).unwrap();
        let r = b.step(0.37, &cmd(&[0.0, 0.0])).unwrap();
        assert_eq!(r.ticks, vec![0, 0]);
    }

    #[test]
    fn ideal_wheel_one_revolution() {
        let mut b = ControlBoard::new(DriveConfig::differential(0.05, 0.1, 48), 0.0, 0.0, 1).unwrap();
        let r = b.step(1.0, &cmd(&[TAU, TAU])).unwrap();
        assert_eq!(r.ticks, vec![48, 48]);
        assert_eq!(r.delta_time, 1_000_000);
    }

    #[test]
    fn first_order_step_response() {
        let mut b = ControlBoard::new(DriveConfig::differential(0.05, 0.1, 48), 0.05, 0.0, 1).unwrap();
        b.set_setpoints(&cmd(&[10.0, 10.0])).unwrap();
        for _ in 0..50 {
            b.advance(0.001).unwrap();
        }
        let expected = 10.0 * (1.0 - (-1.0f64).exp());
        assert!((b.wheel_velocities()[0] - expected).abs() < 1e-9);
        assert!((expected / 10.0 - 0.632).abs() < 1e-3);
    }

    #[test]
    fn twist_commands_respect_drive_type() {
        let mut b = ControlBoard::new(DriveConfig::differential(0.05, 0.1, 48), 0.0, 0.0, 1).unwrap();
        assert!(b.command_twist(&Twist2D::new(0.1, 0.2, 0.0)).is_err());
        assert_eq!(b.rejected_commands(), 1);
        assert_eq!(b.setpoints(), &[0.0, 0.0]);
        b.command_twist(&Twist2D::new(0.1, 0.0, 0.0)).unwrap();
        assert!((b.setpoints()[0] - 2.0).abs() < 1e-12);
        assert!(b.step(0.1, &cmd(&[1.0])).is_err());
        assert!(b.advance(0.0).is_err());
    }

    #[test]
    fn slip_noise_is_seeded() {
        let run = |seed| {
            let mut b = ControlBoard::new(DriveConfig::default(), 0.05, 0.05, seed).unwrap();
            b.command_twist(&Twist2D::new(0.3, 0.0, 0.2)).unwrap();
            for _ in 0..500 {
                b.advance(0.002).unwrap();
            }
            (b.ticks().to_vec(), b.odometry())
        };
        assert_eq!(run(7), run(7));
        assert_ne!(run(7).0, run(8).0);
    }
}
