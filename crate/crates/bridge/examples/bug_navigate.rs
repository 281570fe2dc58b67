//! Drives to a goal, going around obstacles when blocked.
//!
//! `cargo run -p mbot-bridge --example bug_navigate -- --bridge ws://localhost:8765 --goal 3,2`

use std::process::ExitCode;
use std::time::Duration;

use clap::Parser;
use mbot_bridge::{bug_navigate, BugConfig, BugOutcome, RobotHandle};

fn parse_goal(s: &str) -> Result<(f64, f64), String> {
    let (x, y) = s.split_once(',').ok_or("expected x,y")?;
    let p = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("{v}: {e}"));
    Ok((p(x)?, p(y)?))
}

#[derive(Parser)]
struct Args {
    #[arg(long, default_value = "ws://localhost:8765")]
    bridge: String,
    /// Goal position in the map frame, meters.
    #[arg(long, value_parser = parse_goal)]
    goal: (f64, f64),
    /// Give up after this many seconds.
    #[arg(long, default_value_t = 300.0)]
    duration: f64,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let run = || -> Result<BugOutcome, mbot_bridge::ClientError> {
        let mut robot = RobotHandle::connect(&args.bridge)?;
        let report = bug_navigate(&mut robot, args.goal, &BugConfig::default(), Duration::from_secs_f64(args.duration))?;
        let p = report.final_pose;
        println!("{:?} at ({:.2}, {:.2}) after {} obstacle(s)", report.outcome, p.x, p.y, report.hits);
        robot.close()?;
        Ok(report.outcome)
    };
    match run() {
        Ok(BugOutcome::Reached) => ExitCode::SUCCESS,
        Ok(_) => ExitCode::from(2),
        Err(e) => {
            eprintln!("bug_navigate: {e}");
            ExitCode::FAILURE
        }
    }
}
