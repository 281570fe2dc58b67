//! The simulated stack: world, emulated board behind its serial link, host
//! serial interface, SLAM and path tracker, all on one bus.
//!
//! [`SimStack::tick`] advances every activity once in a fixed order on a
//! simulated clock, so a given config and seed always produce the same message
//! streams. [`SimStack::spawn_realtime`] paces the same ticks against the wall
//! clock for interactive use.

use std::io;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use mbot_core::board::{memory_link, BoardEndpoint, ByteLink, ControlBoard, EndpointStats, MemoryLink, SerialInterface};
use mbot_core::bus::{Bus, BusError, ManualClock};
use mbot_core::grid::GridError;
use mbot_core::messages::Channel;
use mbot_core::nav::TrackerNode;
use mbot_core::slam::{Slam, SlamNode};
use mbot_core::world::{walled_room, WorldError, WorldSim};
use mbot_core::{OccupancyGrid, Pose2D};
use thiserror::Error;

use crate::config::StackConfig;

#[derive(Debug, Error)]
pub enum StackError {
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Bus(#[from] BusError),
    #[error("serial link: {0}")]
    Link(#[from] io::Error),
    #[error(transparent)]
    Map(#[from] GridError),
    #[error("SLAM map geometry differs from the world map")]
    MapMismatch,
}

fn period_us(rate_hz: f64) -> u64 {
    ((1e6 / rate_hz).round() as u64).max(1)
}

/// Default world when no map file is configured.
pub fn default_world() -> OccupancyGrid {
    walled_room(10.0, 0.05)
}

/// Live counters and ground truth, readable while the stack runs on another thread.
#[derive(Debug, Default)]
pub struct StackStatus {
    sim_time_us: AtomicU64,
    rejected_commands: AtomicU64,
    debug_lines: AtomicU64,
    true_pose: Mutex<Pose2D>,
}

impl StackStatus {
    pub fn sim_time_us(&self) -> u64 {
        self.sim_time_us.load(Ordering::SeqCst)
    }

    /// Commands the board refused, such as sideways motion on a differential drive.
    pub fn rejected_commands(&self) -> u64 {
        self.rejected_commands.load(Ordering::SeqCst)
    }

    pub fn debug_lines(&self) -> u64 {
        self.debug_lines.load(Ordering::SeqCst)
    }

    /// Simulator ground truth, for tests and diagnostics only.
    pub fn true_pose(&self) -> Pose2D {
        *self.true_pose.lock().unwrap_or_else(|e| e.into_inner())
    }
}

pub struct SimStack {
    status: Arc<StackStatus>,
    bus: Bus,
    clock: Arc<ManualClock>,
    world: WorldSim,
    endpoint: BoardEndpoint,
    board_link: MemoryLink,
    iface: SerialInterface<MemoryLink>,
    slam: SlamNode,
    tracker: TrackerNode,
    tick_us: u64,
    time_scale: f64,
    scan_period_us: u64,
    next_scan_us: u64,
    control_period_us: u64,
    next_control_us: u64,
    timesync_period_us: Option<u64>,
    next_timesync_us: u64,
    rx: Vec<u8>,
    ticks: u64,
    debug_lines: u64,
}

impl SimStack {
    /// Builds the stack on `world`. SLAM starts from `slam_map` when given,
    /// otherwise from a blank map with the world's geometry.
    pub fn new(cfg: &StackConfig, world: OccupancyGrid, slam_map: Option<OccupancyGrid>) -> Result<Self, StackError> {
        let clock = Arc::new(ManualClock::new(0));
        let bus = Bus::with_clock(clock.clone());
        let wc = &cfg.world;
        let board = ControlBoard::new(cfg.drive.to_drive_config(), cfg.drive.motor_time_constant, wc.noise.encoder_slip_sigma, cfg.seed)
            .map_err(WorldError::from)?;
        let start = Pose2D::new(wc.start[0], wc.start[1], wc.start[2]);
        let slam_map = match slam_map {
            Some(m) if m.geometry() != world.geometry() => return Err(StackError::MapMismatch),
            Some(m) => m,
            None => OccupancyGrid::from_cells(world.geometry(), vec![0; world.cells.len()])?,
        };
        let world = WorldSim::new(world, start, board, wc.lidar, wc.noise, cfg.seed)?;
        let (host_end, board_end) = memory_link();
        let mut slam = Slam::new(cfg.slam, slam_map, cfg.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(1));
        slam.set_mode(cfg.slam_mode);
        let tick_us = period_us(wc.tick_hz);
        Ok(Self {
            status: Arc::default(),
            slam: SlamNode::new(slam, &bus)?,
            tracker: TrackerNode::new(cfg.nav.tracker, &bus, cfg.slam_mode)?,
            iface: SerialInterface::new(host_end, bus.clone())?,
            endpoint: BoardEndpoint::new(cfg.board.publish_rate_hz),
            board_link: board_end,
            world,
            bus,
            clock,
            tick_us,
            time_scale: wc.time_scale,
            scan_period_us: period_us(wc.lidar.scan_rate_hz),
            next_scan_us: 0,
            control_period_us: period_us(cfg.nav.tracker.control_rate_hz),
            next_control_us: 0,
            timesync_period_us: (cfg.board.timesync_rate_hz > 0.0).then(|| period_us(cfg.board.timesync_rate_hz)),
            next_timesync_us: 0,
            rx: Vec::new(),
            ticks: 0,
            debug_lines: 0,
        })
    }

    /// Loads the world named in the config, or the default room.
    pub fn from_config(cfg: &StackConfig, slam_map: Option<OccupancyGrid>) -> Result<Self, StackError> {
        let world = match &cfg.world.map {
            Some(p) => OccupancyGrid::load(p)?,
            None => default_world(),
        };
        Self::new(cfg, world, slam_map)
    }

    pub fn bus(&self) -> &Bus {
        &self.bus
    }

    pub fn world(&self) -> &WorldSim {
        &self.world
    }

    pub fn slam(&self) -> &Slam {
        self.slam.slam()
    }

    pub fn tracker(&self) -> &TrackerNode {
        &self.tracker
    }

    pub fn sim_time_us(&self) -> u64 {
        self.world.sim_time_us()
    }

    pub fn status(&self) -> Arc<StackStatus> {
        self.status.clone()
    }

    pub fn ticks(&self) -> u64 {
        self.ticks
    }

    /// Board-side protocol counters, including rejected commands.
    pub fn board_stats(&self) -> EndpointStats {
        self.endpoint.stats()
    }

    /// Lines the board has written to its debug port so far.
    pub fn debug_line_count(&self) -> u64 {
        self.debug_lines
    }

    /// Advances the whole stack by one tick of simulated time.
    pub fn tick(&mut self) -> Result<(), StackError> {
        let now = self.world.sim_time_us();
        if let Some(p) = self.timesync_period_us {
            if now >= self.next_timesync_us {
                self.iface.send_timesync(now)?;
                self.next_timesync_us = now + p;
            }
        }
        self.iface.push_commands()?;

        self.rx.clear();
        self.board_link.recv_available(&mut self.rx)?;
        if !self.rx.is_empty() {
            let reply = self.endpoint.ingest(self.world.board_mut(), &self.rx);
            if !reply.is_empty() {
                self.board_link.send(&reply)?;
            }
        }
        self.world.step(self.tick_us as f64 * 1e-6)?;
        let out = self.endpoint.poll_output(self.world.board());
        if !out.is_empty() {
            self.board_link.send(&out)?;
        }
        for line in self.endpoint.take_debug_lines() {
            self.debug_lines += 1;
            log::warn!("board: {line}");
        }

        let now = self.world.sim_time_us();
        self.clock.set(now);
        self.iface.pull_readings()?;
        if now >= self.next_scan_us {
            let scan = self.world.make_scan();
            self.bus.publish(Channel::Lidar, &scan)?;
            self.next_scan_us = now + self.scan_period_us;
        }
        self.slam.poll()?;
        if now >= self.next_control_us {
            self.tracker.poll()?;
            self.next_control_us = now + self.control_period_us;
        }
        self.ticks += 1;
        self.publish_status();
        Ok(())
    }

    fn publish_status(&self) {
        let st = &self.status;
        st.sim_time_us.store(self.world.sim_time_us(), Ordering::SeqCst);
        st.rejected_commands.store(self.endpoint.stats().rejected_commands, Ordering::SeqCst);
        st.debug_lines.store(self.debug_lines, Ordering::SeqCst);
        *st.true_pose.lock().unwrap_or_else(|e| e.into_inner()) = self.world.true_pose();
    }

    /// Ticks until `seconds` of simulated time have passed.
    pub fn run_for(&mut self, seconds: f64) -> Result<(), StackError> {
        let end = self.sim_time_us() + (seconds * 1e6).round() as u64;
        while self.sim_time_us() < end {
            self.tick()?;
        }
        Ok(())
    }

    /// Runs the stack on its own thread, pacing simulated time at
    /// `time_scale` times the wall clock. Falls behind gracefully when the
    /// machine is too slow.
    pub fn spawn_realtime(self) -> io::Result<RunningStack> {
        let stop = Arc::new(AtomicBool::new(false));
        let bus = self.bus.clone();
        let status = self.status.clone();
        let flag = stop.clone();
        let handle = thread::Builder::new().name("sim-stack".into()).spawn(move || self.realtime_loop(&flag))?;
        Ok(RunningStack { stop, bus, status, handle: Some(handle) })
    }

    fn realtime_loop(mut self, stop: &AtomicBool) -> Result<SimStack, StackError> {
        let mut wall0 = Instant::now();
        let mut sim0 = self.sim_time_us();
        let mut lagging = false;
        while !stop.load(Ordering::SeqCst) {
            self.tick()?;
            let due = Duration::from_secs_f64((self.sim_time_us() - sim0) as f64 * 1e-6 / self.time_scale);
            let elapsed = wall0.elapsed();
            if let Some(ahead) = due.checked_sub(elapsed) {
                thread::sleep(ahead);
                lagging = false;
            } else if elapsed - due > Duration::from_millis(500) {
                if !lagging {
                    log::warn!("simulation running slower than time_scale {}", self.time_scale);
                    lagging = true;
                }
                wall0 = Instant::now();
                sim0 = self.sim_time_us();
            }
        }
        Ok(self)
    }
}

/// Handle to a stack running on its own thread.
pub struct RunningStack {
    stop: Arc<AtomicBool>,
    bus: Bus,
    status: Arc<StackStatus>,
    handle: Option<JoinHandle<Result<SimStack, StackError>>>,
}

impl RunningStack {
    pub fn bus(&self) -> &Bus {
        &self.bus
    }

    pub fn status(&self) -> &StackStatus {
        &self.status
    }

    pub fn is_running(&self) -> bool {
        self.handle.as_ref().is_some_and(|h| !h.is_finished())
    }

    /// Stops the loop and hands back the stack for inspection or map saving.
    pub fn stop(mut self) -> Result<SimStack, StackError> {
        self.stop.store(true, Ordering::SeqCst);
        let h = self.handle.take().expect("joined once");
        h.join().unwrap_or_else(|p| std::panic::resume_unwind(p))
    }
}

impl Drop for RunningStack {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}
