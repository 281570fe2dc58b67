use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};
use mbot_core::world::{round_room, walled_room};
use mbot_stack::launch::Launched;
use mbot_stack::{mapfile, StackConfig};

#[derive(Parser)]
#[command(name = "mbot-stack", version, about = "Run the robot stack and its tools")]
struct Cli {
    /// TOML config file. Keys not set there keep their defaults.
    #[arg(long, global = true, env = "MBOT_CONFIG")]
    config: Option<PathBuf>,
    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Start the stack: world and board simulation, SLAM, path tracker and bridge.
    Up(UpArgs),
    /// Inspect configuration.
    Config {
        /// Print every key with its default value.
        #[arg(long)]
        defaults: bool,
    },
    /// Map file tools.
    Map {
        #[command(subcommand)]
        command: MapCommand,
    },
    /// Log playback. Not implemented.
    Replay {
        #[arg(trailing_var_arg = true, allow_hyphen_values = true, hide = true)]
        rest: Vec<String>,
    },
}

#[derive(Args)]
struct UpArgs {
    /// Simulate the world and the control board.
    #[arg(long)]
    sim: bool,
    /// Serve only the bridge protocol, no web app files.
    #[arg(long)]
    headless: bool,
    /// Ground-truth world map (.map or .pgm).
    #[arg(long)]
    world: Option<PathBuf>,
    /// Start SLAM from this map instead of a blank one.
    #[arg(long)]
    load_map: Option<PathBuf>,
    /// Write the SLAM map here on shutdown.
    #[arg(long)]
    save_map: Option<PathBuf>,
    #[arg(long)]
    port: Option<u16>,
    #[arg(long)]
    bind: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Simulated seconds per wall-clock second.
    #[arg(long)]
    time_scale: Option<f64>,
    /// Initial SLAM mode: idle, localization_only or full_slam.
    #[arg(long)]
    slam_mode: Option<mbot_core::SlamMode>,
    /// Directory served over HTTP at `/`.
    #[arg(long)]
    web_root: Option<PathBuf>,
    /// Stop after this many wall-clock seconds instead of waiting for Ctrl-C.
    #[arg(long)]
    duration: Option<f64>,
}

#[derive(Subcommand)]
enum MapCommand {
    /// Convert between .map and .pgm, chosen by file extension.
    Convert { input: PathBuf, output: PathBuf },
    /// Write a square walled room of interior side SIZE meters.
    Room {
        output: PathBuf,
        #[arg(long, default_value_t = 10.0)]
        size: f64,
        #[arg(long, default_value_t = 0.05)]
        resolution: f64,
    },
    /// Write a circular room of the given radius centred on the origin.
    Round {
        output: PathBuf,
        #[arg(long, default_value_t = 2.0)]
        radius: f64,
        #[arg(long, default_value_t = 0.05)]
        resolution: f64,
    },
}

fn up(cli: &Cli, args: &UpArgs) -> Result<(), String> {
    let mut cfg = StackConfig::load(cli.config.as_deref(), std::env::vars()).map_err(|e| e.to_string())?;
    if args.sim {
        cfg.sim = true;
    }
    if args.headless {
        cfg.headless = true;
    }
    if let Some(w) = &args.world {
        cfg.world.map = Some(w.clone());
    }
    if let Some(p) = args.port {
        cfg.bridge.port = p;
    }
    if let Some(b) = &args.bind {
        cfg.bridge.bind = b.clone();
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(t) = args.time_scale {
        cfg.world.time_scale = t;
    }
    if let Some(m) = args.slam_mode {
        cfg.slam_mode = m;
    }
    if let Some(r) = &args.web_root {
        cfg.bridge.web_root = Some(r.clone());
    }
    if let Some(p) = &args.save_map {
        mapfile::MapFormat::from_path(p).map_err(|e| format!("--save-map: {e}"))?;
    }

    let running = Launched::start(&cfg, args.load_map.as_deref()).map_err(|e| e.to_string())?;
    let interrupted = Arc::new(AtomicBool::new(false));
    {
        let flag = interrupted.clone();
        ctrlc::set_handler(move || flag.store(true, Ordering::SeqCst)).map_err(|e| format!("cannot install Ctrl-C handler: {e}"))?;
    }
    println!("mbot-stack up: bridge on ws://{} (Ctrl-C to stop)", running.bridge_addr());
    let deadline = args.duration.map(|d| Instant::now() + Duration::from_secs_f64(d.max(0.0)));
    while !interrupted.load(Ordering::SeqCst) && deadline.map_or(true, |d| Instant::now() < d) {
        if !running.is_running() {
            break;
        }
        thread::sleep(Duration::from_millis(50));
    }
    println!("shutting down");
    running.shutdown(args.save_map.as_deref()).map_err(|e| e.to_string())?;
    if let Some(p) = &args.save_map {
        println!("map saved to {}", p.display());
    }
    Ok(())
}

fn map_command(cmd: &MapCommand) -> Result<(), String> {
    let save = |g: &mbot_core::OccupancyGrid, out: &Path| mapfile::save(g, out).map_err(|e| format!("{}: {e}", out.display()));
    match cmd {
        MapCommand::Convert { input, output } => {
            mapfile::MapFormat::from_path(output).map_err(|e| e.to_string())?;
            let g = mapfile::load(input).map_err(|e| format!("{}: {e}", input.display()))?;
            save(&g, output)
        }
        MapCommand::Room { output, size, resolution } => {
            if !(*size > 0.0 && *resolution > 0.0) {
                return Err("size and resolution must be positive".into());
            }
            save(&walled_room(*size, *resolution), output)
        }
        MapCommand::Round { output, radius, resolution } => {
            if !(*radius > 0.0 && *resolution > 0.0) {
                return Err("radius and resolution must be positive".into());
            }
            save(&round_room(*radius, *resolution), output)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match &cli.command {
        Command::Up(args) => up(&cli, args),
        Command::Config { defaults } => {
            if *defaults {
                print!("{}", StackConfig::defaults_toml());
                Ok(())
            } else {
                StackConfig::load(cli.config.as_deref(), std::env::vars())
                    .map_err(|e| e.to_string())
                    .and_then(|c| toml::to_string(&c).map_err(|e| e.to_string()))
                    .map(|s| print!("{s}"))
            }
        }
        Command::Map { command } => map_command(command),
        Command::Replay { .. } => {
            eprintln!("mbot-stack replay: log playback is not part of this build");
            return ExitCode::from(2);
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mbot-stack: {e}");
            ExitCode::FAILURE
        }
    }
}
