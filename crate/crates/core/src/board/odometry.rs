use thiserror::Error;

use super::kinematics::{forward_kinematics, DriveConfig, KinematicsError};
use crate::geometry::{normalize_angle, Pose2};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OdometryError {
    #[error("encoder delta_time must be positive")]
    ZeroInterval,
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
}

/// Advances `prev` by the wheel motion in `tick_deltas` over `delta_time_us`.
///
/// Heading is advanced by half the rotation before translating (midpoint rule),
/// then by the remaining half.
pub fn dead_reckon<T: Scalar>(
    cfg: &DriveConfig<T>,
    prev: &Pose2<T>,
    tick_deltas: &[i64],
    delta_time_us: u64,
) -> Result<Pose2<T>, OdometryError> {
    if delta_time_us == 0 {
        return Err(OdometryError::ZeroInterval);
    }
    let rad_per_tick = (T::PI() + T::PI()) / T::lit(cfg.encoder_resolution as f64);
    // wheel angle increments treated as speeds over a unit interval give displacements directly
    let increments: Vec<T> = tick_deltas.iter().map(|&t| T::lit(t as f64) * rad_per_tick).collect();
    let d = forward_kinematics(cfg, &increments)?;
    let mid = prev.theta + d.wz / T::lit(2.0);
    let (s, c) = mid.sin_cos();
    Ok(Pose2 {
        x: prev.x + d.vx * c - d.vy * s,
        y: prev.y + d.vx * s + d.vy * c,
        theta: normalize_angle(prev.theta + d.wz),
        utime: prev.utime + delta_time_us,
    })
}
