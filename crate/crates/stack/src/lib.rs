//! Launcher for the robot stack: configuration, the simulated runtime and map
//! file tools.

pub mod config;
pub mod launch;
pub mod mapfile;
pub mod runtime;

pub use config::{ConfigError, StackConfig};
pub use launch::{LaunchError, Launched};
pub use runtime::{default_world, RunningStack, SimStack, StackError, StackStatus};
