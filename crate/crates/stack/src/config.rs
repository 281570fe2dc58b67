//! Stack configuration: one TOML file, every key optional, unknown keys
//! rejected. Environment variables `MBOT_<SECTION>__<KEY>` override single keys.

use std::fmt::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use mbot_bridge::DEFAULT_PORT;
use mbot_core::board::{DriveConfig, DriveType};
use mbot_core::messages::SlamMode;
use mbot_core::nav::{PlannerConfig, TrackerConfig};
use mbot_core::slam::SlamConfig;
use mbot_core::world::{LidarConfig, NoiseConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ENV_PREFIX: &str = "MBOT_";
/// Names the config file itself rather than overriding a key.
pub const ENV_CONFIG_FILE: &str = "MBOT_CONFIG";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: &'static str, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StackConfig {
    /// Seeds every random source (sensor noise, encoder slip, particle filter).
    pub seed: u64,
    /// Run against the simulated world and board.
    pub sim: bool,
    /// Skip serving the web app directory; the bridge websocket still runs.
    pub headless: bool,
    pub slam_mode: SlamMode,
    pub bridge: BridgeSection,
    pub world: WorldSection,
    pub drive: DriveSection,
    pub board: BoardSection,
    pub slam: SlamConfig,
    pub nav: NavSection,
}

impl Default for StackConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            sim: true,
            headless: false,
            slam_mode: SlamMode::FullSlam,
            bridge: BridgeSection::default(),
            world: WorldSection::default(),
            drive: DriveSection::default(),
            board: BoardSection::default(),
            slam: SlamConfig::default(),
            nav: NavSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BridgeSection {
    pub bind: String,
    pub port: u16,
    /// Per-client forwarding queue length.
    pub client_queue: usize,
    /// Static files served at `/` when not headless.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub web_root: Option<PathBuf>,
}

impl Default for BridgeSection {
    fn default() -> Self {
        Self { bind: "0.0.0.0".into(), port: DEFAULT_PORT, client_queue: 16, web_root: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldSection {
    /// Ground-truth map. Without one a 10 m walled room is generated.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub map: Option<PathBuf>,
    /// Start pose `[x, y, theta]` in meters and radians.
    pub start: [f64; 3],
    /// Simulated seconds per wall-clock second.
    pub time_scale: f64,
    pub tick_hz: f64,
    pub noise: NoiseConfig,
    pub lidar: LidarConfig,
}

impl Default for WorldSection {
    fn default() -> Self {
        Self {
            map: None,
            start: [2.0, 2.0, 0.0],
            time_scale: 1.0,
            tick_hz: 100.0,
            noise: NoiseConfig::default(),
            lidar: LidarConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriveSection {
    pub drive_type: DriveType,
    pub wheel_radius: f64,
    pub base_radius: f64,
    pub encoder_resolution: u32,
    /// Omni wheel body angles in degrees.
    pub omni_wheel_angles_deg: [f64; 3],
    pub max_wheel_speed: f64,
    /// First-order wheel response time constant, seconds.
    pub motor_time_constant: f64,
}

impl Default for DriveSection {
    fn default() -> Self {
        let d = DriveConfig::<f64>::default();
        Self {
            drive_type: d.drive_type,
            wheel_radius: d.wheel_radius,
            base_radius: d.base_radius,
            encoder_resolution: d.encoder_resolution,
            omni_wheel_angles_deg: [90.0, 210.0, 330.0],
            max_wheel_speed: d.max_wheel_speed,
            motor_time_constant: 0.05,
        }
    }
}

impl DriveSection {
    pub fn to_drive_config(&self) -> DriveConfig<f64> {
        DriveConfig {
            drive_type: self.drive_type,
            wheel_radius: self.wheel_radius,
            base_radius: self.base_radius,
            encoder_resolution: self.encoder_resolution,
            omni_wheel_angles: self.omni_wheel_angles_deg.map(f64::to_radians),
            max_wheel_speed: self.max_wheel_speed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoardSection {
    /// Encoder and odometry frames per second on the data port.
    pub publish_rate_hz: f64,
    pub timesync_rate_hz: f64,
}

impl Default for BoardSection {
    fn default() -> Self {
        Self { publish_rate_hz: 50.0, timesync_rate_hz: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct NavSection {
    pub planner: PlannerConfig,
    pub tracker: TrackerConfig,
}

fn check(ok: bool, key: &'static str, reason: impl Into<String>) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(ConfigError::Invalid { key, reason: reason.into() })
    }
}

impl StackConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Defaults, then the file if given, then `MBOT_*` overrides from `vars`.
    pub fn load<I>(path: Option<&Path>, vars: I) -> Result<Self, ConfigError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|source| ConfigError::Read { path: p.to_path_buf(), source })?,
            None => String::new(),
        };
        let mut table: toml::Table = toml::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        apply_env(&mut table, vars)?;
        let cfg: Self = table.try_into().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Commented TOML listing every key at its default.
    pub fn defaults_toml() -> String {
        let body = toml::to_string(&Self::default()).expect("config serializes");
        let mut out = String::new();
        let _ = writeln!(out, "# mbot-stack configuration. Every key is optional; unknown keys are errors.");
        let _ = writeln!(out, "# Override single keys with environment variables, e.g. MBOT_BRIDGE__PORT=9000");
        let _ = writeln!(out, "# or MBOT_SLAM__SENSOR__SIGMA=0.05. Optional keys not shown:");
        let _ = writeln!(out, "#   bridge.web_root = \"path/to/webapp\"");
        let _ = writeln!(out, "#   world.map = \"maps/room.map\"");
        out.push('\n');
        out.push_str(&body);
        out
    }

    pub fn bridge_addr(&self) -> Result<SocketAddr, ConfigError> {
        let host = if self.bridge.bind.contains(':') { format!("[{}]", self.bridge.bind) } else { self.bridge.bind.clone() };
        format!("{host}:{}", self.bridge.port)
            .parse()
            .map_err(|e| ConfigError::Invalid { key: "bridge.bind", reason: format!("{e}") })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let w = &self.world;
        check(w.time_scale > 0.0 && w.time_scale <= 100.0, "world.time_scale", "must be in (0, 100]")?;
        check(w.tick_hz >= 10.0 && w.tick_hz <= 10_000.0, "world.tick_hz", "must be in [10, 10000]")?;
        check(w.start.iter().all(|v| v.is_finite()), "world.start", "must be finite")?;
        check((0.0..1.0).contains(&w.noise.beam_dropout), "world.noise.beam_dropout", "must be in [0, 1)")?;
        check(w.noise.lidar_range_sigma >= 0.0, "world.noise.lidar_range_sigma", "must be >= 0")?;
        check(w.noise.encoder_slip_sigma >= 0.0, "world.noise.encoder_slip_sigma", "must be >= 0")?;
        check(w.lidar.num_beams > 0 && w.lidar.num_beams <= 4096, "world.lidar.num_beams", "must be in [1, 4096]")?;
        check(w.lidar.max_range > 0.0, "world.lidar.max_range", "must be > 0")?;
        check(w.lidar.scan_rate_hz > 0.0 && w.lidar.scan_rate_hz <= w.tick_hz, "world.lidar.scan_rate_hz", "must be in (0, tick_hz]")?;
        self.drive
            .to_drive_config()
            .validate()
            .map_err(|e| ConfigError::Invalid { key: "drive", reason: e.to_string() })?;
        check(self.drive.motor_time_constant > 0.0, "drive.motor_time_constant", "must be > 0")?;
        check(self.board.publish_rate_hz > 0.0 && self.board.publish_rate_hz <= w.tick_hz, "board.publish_rate_hz", "must be in (0, tick_hz]")?;
        check(self.board.timesync_rate_hz >= 0.0, "board.timesync_rate_hz", "must be >= 0")?;
        let s = &self.slam;
        check(s.num_particles >= 1 && s.num_particles <= 100_000, "slam.num_particles", "must be in [1, 100000]")?;
        check((0.0..=1.0).contains(&s.resample_fraction), "slam.resample_fraction", "must be in [0, 1]")?;
        check(s.init_sigma_xy >= 0.0 && s.init_sigma_theta_deg >= 0.0, "slam.init_sigma_xy", "initial spreads must be >= 0")?;
        check(s.sensor.sigma > 0.0, "slam.sensor.sigma", "must be > 0")?;
        check(s.sensor.p_floor > 0.0 && s.sensor.p_floor < 1.0, "slam.sensor.p_floor", "must be in (0, 1)")?;
        check(s.sensor.beam_stride >= 1, "slam.sensor.beam_stride", "must be >= 1")?;
        check(s.mapping.hit_odds >= 0 && s.mapping.miss_odds >= 0, "slam.mapping", "odds increments must be >= 0")?;
        let p = &self.nav.planner;
        check(p.penalty >= 0.0, "nav.planner.penalty", "must be >= 0")?;
        let t = &self.nav.tracker;
        check(t.lookahead > 0.0, "nav.tracker.lookahead", "must be > 0")?;
        check(t.goal_tolerance > 0.0, "nav.tracker.goal_tolerance", "must be > 0")?;
        check(t.max_vx > 0.0 && t.max_wz > 0.0, "nav.tracker.max_vx", "velocity limits must be > 0")?;
        check(t.control_rate_hz > 0.0 && t.control_rate_hz <= w.tick_hz, "nav.tracker.control_rate_hz", "must be in (0, tick_hz]")?;
        check(self.bridge.client_queue >= 1, "bridge.client_queue", "must be >= 1")?;
        Ok(())
    }
}

/// Parses an override value as a TOML literal, falling back to a bare string.
fn env_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn apply_env<I>(table: &mut toml::Table, vars: I) -> Result<(), ConfigError>
where
    I: IntoIterator<Item = (String, String)>,
{
    let mut vars: Vec<(String, String)> = vars.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX) && k != ENV_CONFIG_FILE).collect();
    vars.sort();
    for (key, raw) in vars {
        let path: Vec<String> = key[ENV_PREFIX.len()..].split("__").map(str::to_ascii_lowercase).collect();
        if path.iter().any(String::is_empty) {
            return Err(ConfigError::Parse(format!("malformed override variable `{key}`")));
        }
        let mut node = &mut *table;
        for part in &path[..path.len() - 1] {
            let entry = node.entry(part.clone()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
            node = entry
                .as_table_mut()
                .ok_or_else(|| ConfigError::Parse(format!("`{key}` overrides inside non-table key `{part}`")))?;
        }
        node.insert(path[path.len() - 1].clone(), env_value(&raw));
    }
    Ok(())
}
