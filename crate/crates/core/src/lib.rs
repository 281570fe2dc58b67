//! Core of a desk-scale mobile robot stack.
//!
//! The geometric layer ([`geometry`], [`grid`], [`board`] kinematics) is generic
//! over the scalar type; the aliases below fix it to `f64`, which is what the
//! message catalog, simulator, SLAM and navigation use.

pub mod board;
pub mod bus;
pub mod geometry;
pub mod grid;
pub mod messages;
pub mod nav;
pub mod scalar;
pub mod slam;
pub mod wire;
pub mod world;

pub use geometry::{normalize_angle, wrap_angle, NonFiniteAngle, Pose2, Twist2};
pub use grid::{Cell, GridError, GridGeometry, LogOddsGrid};
pub use messages::{Channel, EncoderReading, LidarScan, Path2D, ResetRequest, SlamMode, SlamModeCommand, WheelCommand};
pub use scalar::Scalar;

pub type Pose2D = Pose2<f64>;
pub type Twist2D = Twist2<f64>;
pub type OccupancyGrid = LogOddsGrid<f64>;
pub type Pose2F = Pose2<f32>;
pub type Twist2F = Twist2<f32>;
pub type OccupancyGridF = LogOddsGrid<f32>;
