//! Planar poses, body twists and angle arithmetic.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("angle must be finite, got {0}")]
pub struct NonFiniteAngle(pub f64);

/// Wraps `a` into `(-pi, pi]`, rejecting NaN and infinities.
pub fn wrap_angle<T: Scalar>(a: T) -> Result<T, NonFiniteAngle> {
    if !a.is_finite() {
        return Err(NonFiniteAngle(a.to_f64_lossy()));
    }
    Ok(normalize_angle(a))
}

/// Unchecked form of [`wrap_angle`] for hot loops. Non-finite input yields NaN.
#[inline]
pub fn normalize_angle<T: Scalar>(a: T) -> T {
    let pi = T::PI();
    let two_pi = pi + pi;
    let mut r = a % two_pi;
    if r > pi {
        r = r - two_pi;
    } else if r <= -pi {
        r = r + two_pi;
    }
    // r - 2pi can round onto -pi exactly
    if r <= -pi {
        r = pi;
    }
    r
}

/// Planar pose in the map frame. `utime` is microseconds on the stack clock.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2<T> {
    pub x: T,
    pub y: T,
    pub theta: T,
    #[serde(default)]
    pub utime: u64,
}

impl<T: Scalar> Pose2<T> {
    pub fn new(x: T, y: T, theta: T) -> Self {
        Self { x, y, theta, utime: 0 }
    }

    pub fn with_utime(mut self, utime: u64) -> Self {
        self.utime = utime;
        self
    }

    pub fn distance_to(&self, other: &Self) -> T {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Heading error magnitude to `other`, in `[0, pi]`.
    pub fn heading_error_to(&self, other: &Self) -> T {
        normalize_angle(self.theta - other.theta).abs()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }

    /// Expresses `self` in the frame of `origin`.
    pub fn relative_to(&self, origin: &Self) -> Self {
        let (s, c) = origin.theta.sin_cos();
        let dx = self.x - origin.x;
        let dy = self.y - origin.y;
        Self {
            x: c * dx + s * dy,
            y: -s * dx + c * dy,
            theta: normalize_angle(self.theta - origin.theta),
            utime: self.utime,
        }
    }

    /// Applies a body-frame displacement `delta` to `self`.
    pub fn compose(&self, delta: &Self) -> Self {
        let (s, c) = self.theta.sin_cos();
        Self {
            x: self.x + c * delta.x - s * delta.y,
            y: self.y + s * delta.x + c * delta.y,
            theta: normalize_angle(self.theta + delta.theta),
            utime: delta.utime.max(self.utime),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Pose2<U> {
        Pose2 {
            x: U::lit(self.x.to_f64_lossy()),
            y: U::lit(self.y.to_f64_lossy()),
            theta: U::lit(self.theta.to_f64_lossy()),
            utime: self.utime,
        }
    }
}

/// Body-frame velocity: forward, leftward and counter-clockwise rates.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Twist2<T> {
    pub vx: T,
    pub vy: T,
    pub wz: T,
    #[serde(default)]
    pub utime: u64,
}

impl<T: Scalar> Twist2<T> {
    pub fn new(vx: T, vy: T, wz: T) -> Self {
        Self { vx, vy, wz, utime: 0 }
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }

    pub fn with_utime(mut self, utime: u64) -> Self {
        self.utime = utime;
        self
    }

    pub fn is_finite(&self) -> bool {
        self.vx.is_finite() && self.vy.is_finite() && self.wz.is_finite()
    }

    pub fn is_zero(&self) -> bool {
        self.vx.is_zero() && self.vy.is_zero() && self.wz.is_zero()
    }
}
