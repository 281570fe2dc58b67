//! Message payloads and the fixed channel catalog.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{OccupancyGrid, Pose2D, Twist2D};

/// One revolution of lidar returns. Bearings are radians in the robot frame,
/// counter-clockwise from +x. A range `<= 0` marks an invalid beam.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LidarScan {
    pub utime: u64,
    pub ranges: Vec<f64>,
    pub thetas: Vec<f64>,
    pub num_ranges: usize,
}

impl LidarScan {
    pub fn is_consistent(&self) -> bool {
        self.ranges.len() == self.num_ranges && self.thetas.len() == self.num_ranges
    }

    /// `(range, bearing)` pairs of valid beams.
    pub fn valid_beams(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.ranges
            .iter()
            .zip(&self.thetas)
            .filter(|(r, _)| **r > 0.0 && r.is_finite())
            .map(|(r, t)| (*r, *t))
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Path2D {
    pub utime: u64,
    pub poses: Vec<Pose2D>,
}

impl Path2D {
    pub fn new(poses: Vec<Pose2D>) -> Self {
        Self { utime: 0, poses }
    }

    /// Consecutive waypoints must differ in position unless the path has one pose.
    pub fn is_well_formed(&self) -> bool {
        self.poses.len() <= 1 || self.poses.windows(2).all(|w| w[0].x != w[1].x || w[0].y != w[1].y)
    }

    pub fn length(&self) -> f64 {
        self.poses.windows(2).map(|w| w[0].distance_to(&w[1])).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SlamMode {
    #[default]
    Idle,
    LocalizationOnly,
    FullSlam,
}

impl SlamMode {
    pub fn code(self) -> u8 {
        match self {
            SlamMode::Idle => 0,
            SlamMode::LocalizationOnly => 1,
            SlamMode::FullSlam => 2,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(SlamMode::Idle),
            1 => Some(SlamMode::LocalizationOnly),
            2 => Some(SlamMode::FullSlam),
            _ => None,
        }
    }
}

impl FromStr for SlamMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().replace('-', "_").as_str() {
            "IDLE" => Ok(SlamMode::Idle),
            "LOCALIZATION_ONLY" | "LOCALIZATION" | "LOCALIZE" => Ok(SlamMode::LocalizationOnly),
            "FULL_SLAM" | "SLAM" | "FULL" => Ok(SlamMode::FullSlam),
            other => Err(format!("unknown SLAM mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SlamModeCommand {
    #[serde(default)]
    pub utime: u64,
    pub mode: SlamMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ResetRequest {
    #[serde(default)]
    pub utime: u64,
}

/// Cumulative encoder ticks per motor channel.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EncoderReading {
    pub utime: u64,
    pub ticks: Vec<i64>,
    /// Microseconds since the previous reading.
    pub delta_time: u64,
}

/// Wheel angular velocity setpoints in rad/s, one per motor channel.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct WheelCommand {
    pub utime: u64,
    pub speeds: Vec<f64>,
}

/// Clock synchronization probe echoed by the control board.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TimeSync {
    pub host_utime: u64,
    pub board_utime: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PayloadKind {
    Twist,
    Pose,
    Scan,
    Grid,
    Path,
    Mode,
    Reset,
    Encoders,
    Wheels,
}

/// A payload type that may travel on the bus.
pub trait Payload: crate::wire::Wire + Clone + Send + Sync + 'static {
    const KIND: PayloadKind;
}

impl Payload for Twist2D {
    const KIND: PayloadKind = PayloadKind::Twist;
}
impl Payload for Pose2D {
    const KIND: PayloadKind = PayloadKind::Pose;
}
impl Payload for LidarScan {
    const KIND: PayloadKind = PayloadKind::Scan;
}
impl Payload for OccupancyGrid {
    const KIND: PayloadKind = PayloadKind::Grid;
}
impl Payload for Path2D {
    const KIND: PayloadKind = PayloadKind::Path;
}
impl Payload for SlamModeCommand {
    const KIND: PayloadKind = PayloadKind::Mode;
}
impl Payload for ResetRequest {
    const KIND: PayloadKind = PayloadKind::Reset;
}
impl Payload for EncoderReading {
    const KIND: PayloadKind = PayloadKind::Encoders;
}
impl Payload for WheelCommand {
    const KIND: PayloadKind = PayloadKind::Wheels;
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown channel `{0}`")]
pub struct UnknownChannel(pub String);

macro_rules! channels {
    ($($variant:ident => $name:literal, $kind:ident;)*) => {
        /// The fixed channel catalog.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum Channel {
            $($variant,)*
        }

        impl Channel {
            pub const ALL: &'static [Channel] = &[$(Channel::$variant,)*];

            pub const fn name(self) -> &'static str {
                match self {
                    $(Channel::$variant => $name,)*
                }
            }

            pub const fn kind(self) -> PayloadKind {
                match self {
                    $(Channel::$variant => PayloadKind::$kind,)*
                }
            }
        }

        impl FromStr for Channel {
            type Err = UnknownChannel;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($name => Ok(Channel::$variant),)*
                    other => Err(UnknownChannel(other.to_string())),
                }
            }
        }
    };
}

channels! {
    MbotVelCmd => "MBOT_VEL_CMD", Twist;
    Odometry => "ODOMETRY", Pose;
    Lidar => "LIDAR", Scan;
    SlamPose => "SLAM_POSE", Pose;
    SlamMap => "SLAM_MAP", Grid;
    ControllerPath => "CONTROLLER_PATH", Path;
    SlamMode => "SLAM_MODE", Mode;
    SlamReset => "SLAM_RESET", Reset;
    MbotEncoders => "MBOT_ENCODERS", Encoders;
    MbotMotorCmd => "MBOT_MOTOR_CMD", Wheels;
}

impl Channel {
    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
