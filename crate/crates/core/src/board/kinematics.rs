use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Twist2;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KinematicsError {
    #[error("differential drive cannot actuate lateral velocity (vy = {0})")]
    LateralOnDifferential(f64),
    #[error("non-finite twist")]
    NonFinite,
    #[error("{drive:?} drive expects {expected} wheel speeds, got {got}")]
    WheelCount { drive: DriveType, expected: usize, got: usize },
    #[error("omni wheel angles give a singular wheel matrix")]
    SingularGeometry,
    #[error("invalid drive configuration: {0}")]
    BadConfig(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriveType {
    Differential,
    Omni3,
}

impl DriveType {
    pub fn wheel_count(self) -> usize {
        match self {
            DriveType::Differential => 2,
            DriveType::Omni3 => 3,
        }
    }
}

/// Wheel geometry of the robot. For differential drive `base_radius` is half the
/// track width; for omni3 it is the wheel-center distance from the body center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveConfig<T> {
    pub drive_type: DriveType,
    pub wheel_radius: T,
    pub base_radius: T,
    /// Ticks per wheel revolution, after gearing.
    pub encoder_resolution: u32,
    /// Body angle of each omni wheel, radians.
    pub omni_wheel_angles: [T; 3],
    /// Setpoint magnitude limit, rad/s.
    pub max_wheel_speed: T,
}

impl<T: Scalar> DriveConfig<T> {
    pub fn differential(wheel_radius: T, base_radius: T, encoder_resolution: u32) -> Self {
        Self {
            drive_type: DriveType::Differential,
            wheel_radius,
            base_radius,
            encoder_resolution,
            omni_wheel_angles: default_omni_angles(),
            max_wheel_speed: T::lit(25.0),
        }
    }

    pub fn omni3(wheel_radius: T, base_radius: T, encoder_resolution: u32) -> Self {
        Self { drive_type: DriveType::Omni3, ..Self::differential(wheel_radius, base_radius, encoder_resolution) }
    }

    pub fn validate(&self) -> Result<(), KinematicsError> {
        if !(self.wheel_radius > T::zero()) {
            return Err(KinematicsError::BadConfig("wheel_radius must be > 0"));
        }
        if !(self.base_radius > T::zero()) {
            return Err(KinematicsError::BadConfig("base_radius must be > 0"));
        }
        if self.encoder_resolution < 1 {
            return Err(KinematicsError::BadConfig("encoder_resolution must be >= 1"));
        }
        if !(self.max_wheel_speed > T::zero()) {
            return Err(KinematicsError::BadConfig("max_wheel_speed must be > 0"));
        }
        if self.drive_type == DriveType::Omni3 {
            omni_inverse_matrix(self)?;
        }
        Ok(())
    }

    pub fn wheel_count(&self) -> usize {
        self.drive_type.wheel_count()
    }
}

/// One wheel axis facing +x: wheels at 90, 210 and 330 degrees.
pub fn default_omni_angles<T: Scalar>() -> [T; 3] {
    let d = T::PI() / T::lit(180.0);
    [T::lit(90.0) * d, T::lit(210.0) * d, T::lit(330.0) * d]
}

impl Default for DriveConfig<f64> {
    fn default() -> Self {
        Self::differential(0.042, 0.0775, 1632)
    }
}

/// Wheel angular velocities (rad/s) realizing `twist`. Setpoints beyond
/// `max_wheel_speed` are scaled down together so the twist direction is kept.
pub fn inverse_kinematics<T: Scalar>(cfg: &DriveConfig<T>, twist: &Twist2<T>) -> Result<Vec<T>, KinematicsError> {
    if !twist.is_finite() {
        return Err(KinematicsError::NonFinite);
    }
    let r = cfg.wheel_radius;
    let b = cfg.base_radius;
    let mut speeds = match cfg.drive_type {
        DriveType::Differential => {
            if !twist.vy.is_zero() {
                return Err(KinematicsError::LateralOnDifferential(twist.vy.to_f64_lossy()));
            }
            vec![(twist.vx - b * twist.wz) / r, (twist.vx + b * twist.wz) / r]
        }
        DriveType::Omni3 => cfg
            .omni_wheel_angles
            .iter()
            .map(|&a| {
                let (s, c) = a.sin_cos();
                (-s * twist.vx + c * twist.vy + b * twist.wz) / r
            })
            .collect(),
    };
    let peak = speeds.iter().fold(T::zero(), |m, s| m.max(s.abs()));
    if peak > cfg.max_wheel_speed {
        let k = cfg.max_wheel_speed / peak;
        speeds.iter_mut().for_each(|s| *s = *s * k);
    }
    Ok(speeds)
}

/// Body twist produced by the given wheel angular velocities.
pub fn forward_kinematics<T: Scalar>(cfg: &DriveConfig<T>, wheels: &[T]) -> Result<Twist2<T>, KinematicsError> {
    let expected = cfg.wheel_count();
    if wheels.len() != expected {
        return Err(KinematicsError::WheelCount { drive: cfg.drive_type, expected, got: wheels.len() });
    }
    let r = cfg.wheel_radius;
    let two = T::lit(2.0);
    match cfg.drive_type {
        DriveType::Differential => {
            let (wl, wr) = (wheels[0], wheels[1]);
            Ok(Twist2::new(r * (wl + wr) / two, T::zero(), r * (wr - wl) / (two * cfg.base_radius)))
        }
        DriveType::Omni3 => {
            let m = omni_inverse_matrix(cfg)?;
            let u: [T; 3] = [wheels[0] * r, wheels[1] * r, wheels[2] * r];
            let row = |i: usize| m[i][0] * u[0] + m[i][1] * u[1] + m[i][2] * u[2];
            Ok(Twist2::new(row(0), row(1), row(2)))
        }
    }
}

/// Inverse of the omni3 rim-speed matrix with rows `[-sin a, cos a, b]`.
fn omni_inverse_matrix<T: Scalar>(cfg: &DriveConfig<T>) -> Result<[[T; 3]; 3], KinematicsError> {
    let b = cfg.base_radius;
    let mut a = [[T::zero(); 3]; 3];
    for (row, &ang) in a.iter_mut().zip(&cfg.omni_wheel_angles) {
        let (s, c) = ang.sin_cos();
        *row = [-s, c, b];
    }
    let det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
    if det.abs() < T::lit(1e-9) * b.max(T::one()) {
        return Err(KinematicsError::SingularGeometry);
    }
    let mut inv = [[T::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            // cofactor of a[j][i]
            let (r0, r1) = match j {
                0 => (1, 2),
                1 => (0, 2),
                _ => (0, 1),
            };
            let (c0, c1) = match i {
                0 => (1, 2),
                1 => (0, 2),
                _ => (0, 1),
            };
            let minor = a[r0][c0] * a[r1][c1] - a[r0][c1] * a[r1][c0];
            let sign = if (i + j) % 2 == 0 { T::one() } else { -T::one() };
            inv[i][j] = sign * minor / det;
        }
    }
    Ok(inv)
}
