//! Follows the nearest wall on the left for a fixed time.
//!
//! `cargo run -p mbot-bridge --example wall_follow -- --bridge ws://localhost:8765 --duration 60`

use std::process::ExitCode;
use std::time::Duration;

use clap::Parser;
use mbot_bridge::{wall_follow, RobotHandle, WallFollowConfig};

#[derive(Parser)]
struct Args {
    #[arg(long, default_value = "ws://localhost:8765")]
    bridge: String,
    /// Seconds of robot time to run.
    #[arg(long, default_value_t = 60.0)]
    duration: f64,
    /// Desired wall distance, meters.
    #[arg(long, default_value_t = 0.5)]
    distance: f64,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let run = || -> Result<(), mbot_bridge::ClientError> {
        let mut robot = RobotHandle::connect(&args.bridge)?;
        let cfg = WallFollowConfig { distance: args.distance, ..WallFollowConfig::default() };
        let report = wall_follow(&mut robot, &cfg, Duration::from_secs_f64(args.duration))?;
        let ranges: Vec<f64> = report.min_ranges.iter().map(|&(_, r)| r).collect();
        let lo = ranges.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = ranges.iter().copied().fold(0.0, f64::max);
        println!("{} scans, nearest wall between {lo:.3} and {hi:.3} m", ranges.len());
        robot.close()
    };
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("wall_follow: {e}");
            ExitCode::FAILURE
        }
    }
}
