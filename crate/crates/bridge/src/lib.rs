//! Websocket bridge to the robot bus and the synchronous client API.

pub mod client;
pub mod envelope;
pub mod programs;
pub mod server;

pub use client::{ClientError, DrivePathOptions, DrivePathOutcome, RobotHandle};
pub use envelope::{Envelope, Op, PLAN_REQUEST};
pub use server::{BridgeConfig, BridgeServer, DEFAULT_PORT};
pub use programs::{bug_navigate, wall_follow, BugConfig, BugOutcome, BugReport, WallFollowConfig, WallFollowReport};
