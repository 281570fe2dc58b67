//! Emulated motor-control board: drive kinematics, wheel dynamics and encoders,
//! dead reckoning, and the framed serial protocol spoken over its data port.

mod endpoint;
mod kinematics;
mod link;
mod motor;
mod odometry;
pub mod serial;

pub use endpoint::{topics, BoardEndpoint, EndpointStats, SerialInterface};
pub use kinematics::{default_omni_angles, forward_kinematics, inverse_kinematics, DriveConfig, DriveType, KinematicsError};
pub use link::{memory_link, ByteLink, MemoryLink, TcpLink};
pub use motor::{BoardError, ControlBoard};
pub use odometry::{dead_reckon, OdometryError};
pub use serial::{decode_frames, encode_frame, FrameDecoder, FrameTooLarge, SerialFrame};
