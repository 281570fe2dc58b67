//! Bring-up of the full simulated stack behind the bridge, used by `mbot-stack up`.

use std::io;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use mbot_bridge::{BridgeConfig, BridgeServer};
use mbot_core::OccupancyGrid;
use thiserror::Error;

use crate::config::{ConfigError, StackConfig};
use crate::mapfile::{self, MapFileError};
use crate::runtime::{default_world, RunningStack, SimStack, StackError, StackStatus};

#[derive(Debug, Error)]
pub enum LaunchError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("map file {} not found; pass an existing .map or .pgm file", .0.display())]
    MissingMap(PathBuf),
    #[error("cannot load map {}: {source}", path.display())]
    BadMap { path: PathBuf, source: MapFileError },
    #[error("bridge port {addr} is already in use; choose another with --port or MBOT_BRIDGE__PORT")]
    PortInUse { addr: SocketAddr },
    #[error("cannot start bridge on {addr}: {source}")]
    Bind { addr: SocketAddr, source: io::Error },
    #[error("hardware mode is not available in this build; run with --sim")]
    NoHardware,
    #[error(transparent)]
    Stack(#[from] StackError),
    #[error("cannot save map to {}: {source}", path.display())]
    Save { path: PathBuf, source: MapFileError },
}

fn load_map(path: &Path) -> Result<OccupancyGrid, LaunchError> {
    if !path.is_file() {
        return Err(LaunchError::MissingMap(path.to_path_buf()));
    }
    mapfile::load(path).map_err(|source| LaunchError::BadMap { path: path.to_path_buf(), source })
}

/// A running stack and the bridge serving it.
pub struct Launched {
    stack: RunningStack,
    bridge: BridgeServer,
}

impl Launched {
    /// Checks every input, binds the bridge and only then starts the stack, so
    /// a bad map or a busy port fails before anything runs.
    pub fn start(cfg: &StackConfig, load_map: Option<&Path>) -> Result<Self, LaunchError> {
        cfg.validate()?;
        if !cfg.sim {
            return Err(LaunchError::NoHardware);
        }
        let world = match &cfg.world.map {
            Some(p) => self::load_map(p)?,
            None => default_world(),
        };
        let slam_map = load_map.map(self::load_map).transpose()?;
        let addr = cfg.bridge_addr()?;
        let bridge_cfg = BridgeConfig {
            client_queue: cfg.bridge.client_queue,
            web_root: if cfg.headless { None } else { cfg.bridge.web_root.clone() },
            planner: cfg.nav.planner,
        };
        let stack = SimStack::new(cfg, world, slam_map)?;
        let bridge = BridgeServer::bind(addr, stack.bus().clone(), bridge_cfg).map_err(|source| {
            if source.kind() == io::ErrorKind::AddrInUse {
                LaunchError::PortInUse { addr }
            } else {
                LaunchError::Bind { addr, source }
            }
        })?;
        let stack = stack.spawn_realtime().map_err(|e| LaunchError::Stack(e.into()))?;
        Ok(Self { stack, bridge })
    }

    pub fn bridge_addr(&self) -> SocketAddr {
        self.bridge.local_addr()
    }

    pub fn bridge(&self) -> &BridgeServer {
        &self.bridge
    }

    pub fn status(&self) -> &StackStatus {
        self.stack.status()
    }

    pub fn is_running(&self) -> bool {
        self.stack.is_running()
    }

    /// Stops the bridge and the stack, then writes the SLAM map if asked.
    pub fn shutdown(self, save_map: Option<&Path>) -> Result<SimStack, LaunchError> {
        self.bridge.shutdown();
        let stack = self.stack.stop()?;
        if let Some(path) = save_map {
            mapfile::save(stack.slam().map(), path).map_err(|source| LaunchError::Save { path: path.to_path_buf(), source })?;
            log::info!("saved map to {}", path.display());
        }
        Ok(stack)
    }
}
