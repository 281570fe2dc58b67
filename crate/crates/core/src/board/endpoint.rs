use std::io;

use super::link::ByteLink;
use super::motor::ControlBoard;
use super::serial::{encode_frame_into, DecodeStats, FrameDecoder, SerialFrame};
use crate::bus::{Bus, BusError, Subscription};
use crate::messages::{Channel, EncoderReading, TimeSync, WheelCommand};
use crate::wire::Wire;
use crate::{Pose2D, Twist2D};

/// Topic ids on the board data port.
pub mod topics {
    /// Host to board: wheel setpoints.
    pub const WHEEL_COMMAND: u16 = 1;
    /// Board to host: cumulative encoder ticks.
    pub const ENCODERS: u16 = 2;
    /// Host to board: body twist.
    pub const TWIST_COMMAND: u16 = 3;
    /// Board to host: dead-reckoned pose.
    pub const ODOMETRY: u16 = 4;
    /// Both ways: the board echoes the probe with its own clock filled in.
    pub const TIMESYNC: u16 = 5;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EndpointStats {
    pub frames_in: u64,
    pub frames_out: u64,
    pub rejected_commands: u64,
    pub unknown_topics: u64,
    pub malformed_payloads: u64,
}

/// Board side of the serial protocol. The data port carries only frames; the
/// debug port carries only human-readable text lines.
#[derive(Debug)]
pub struct BoardEndpoint {
    decoder: FrameDecoder,
    publish_period_us: u64,
    next_publish_utime: u64,
    last_publish_utime: u64,
    debug_lines: Vec<String>,
    stats: EndpointStats,
}

impl BoardEndpoint {
    pub fn new(publish_rate_hz: f64) -> Self {
        let period = (1e6 / publish_rate_hz.max(1e-3)).round() as u64;
        Self {
            decoder: FrameDecoder::new(),
            publish_period_us: period.max(1),
            next_publish_utime: 0,
            last_publish_utime: 0,
            debug_lines: Vec::new(),
            stats: EndpointStats::default(),
        }
    }

    /// Consumes bytes from the data port, applying commands to `board`; returns
    /// any immediate replies as data-port bytes.
    pub fn ingest(&mut self, board: &mut ControlBoard, bytes: &[u8]) -> Vec<u8> {
        self.decoder.push(bytes);
        let frames: Vec<SerialFrame> = self.decoder.drain_frames().collect();
        let mut out = Vec::new();
        for frame in frames {
            self.stats.frames_in += 1;
            match frame.topic_id {
                topics::TWIST_COMMAND => match Twist2D::from_bytes(&frame.payload) {
                    Ok(t) => {
                        if let Err(e) = board.command_twist(&t) {
                            self.reject(board.utime(), format!("twist rejected: {e}"));
                        }
                    }
                    Err(e) => self.malformed(board.utime(), "twist", e),
                },
                topics::WHEEL_COMMAND => match WheelCommand::from_bytes(&frame.payload) {
                    Ok(c) => {
                        if let Err(e) = board.set_setpoints(&c) {
                            self.reject(board.utime(), format!("wheel command rejected: {e}"));
                        }
                    }
                    Err(e) => self.malformed(board.utime(), "wheel command", e),
                },
                topics::TIMESYNC => match TimeSync::from_bytes(&frame.payload) {
                    Ok(ts) => {
                        let echo = TimeSync { host_utime: ts.host_utime, board_utime: board.utime() };
                        self.emit(&mut out, topics::TIMESYNC, echo.to_bytes());
                    }
                    Err(e) => self.malformed(board.utime(), "timesync", e),
                },
                other => {
                    self.stats.unknown_topics += 1;
                    self.debug(board.utime(), format!("unknown topic {other}"));
                }
            }
        }
        out
    }

    /// Encoder and odometry frames, when a publish period has elapsed.
    pub fn poll_output(&mut self, board: &ControlBoard) -> Vec<u8> {
        let now = board.utime();
        let mut out = Vec::new();
        if now < self.next_publish_utime {
            return out;
        }
        let delta_time = now.saturating_sub(self.last_publish_utime).max(1);
        let enc = EncoderReading { utime: now, ticks: board.ticks().to_vec(), delta_time };
        self.emit(&mut out, topics::ENCODERS, enc.to_bytes());
        self.emit(&mut out, topics::ODOMETRY, board.odometry().to_bytes());
        self.last_publish_utime = now;
        self.next_publish_utime = now + self.publish_period_us;
        out
    }

    fn emit(&mut self, out: &mut Vec<u8>, topic: u16, payload: Vec<u8>) {
        encode_frame_into(&SerialFrame::new(topic, payload), out).expect("board payloads are small");
        self.stats.frames_out += 1;
    }

    fn reject(&mut self, utime: u64, msg: String) {
        self.stats.rejected_commands += 1;
        self.debug(utime, msg);
    }

    fn malformed(&mut self, utime: u64, what: &str, e: crate::wire::WireError) {
        self.stats.malformed_payloads += 1;
        self.debug(utime, format!("malformed {what}: {e}"));
    }

    fn debug(&mut self, utime: u64, msg: String) {
        let line = format!("[{utime}] {}", msg.replace(['\n', '\r'], " "));
        self.debug_lines.push(line);
    }

    /// Lines written to the debug port since the last call.
    pub fn take_debug_lines(&mut self) -> Vec<String> {
        std::mem::take(&mut self.debug_lines)
    }

    pub fn stats(&self) -> EndpointStats {
        self.stats
    }

    pub fn decode_stats(&self) -> DecodeStats {
        self.decoder.stats()
    }
}

/// Host-side bridge between the bus and the board data port: forwards velocity
/// and motor commands down, publishes encoder and odometry readings up.
pub struct SerialInterface<L> {
    link: L,
    bus: Bus,
    decoder: FrameDecoder,
    vel_cmd: Subscription,
    motor_cmd: Subscription,
    rx_buf: Vec<u8>,
    last_timesync: Option<TimeSync>,
    malformed: u64,
}

impl<L: ByteLink> SerialInterface<L> {
    pub fn new(link: L, bus: Bus) -> Result<Self, BusError> {
        let vel_cmd = bus.subscribe(Channel::MbotVelCmd, 16)?;
        let motor_cmd = bus.subscribe(Channel::MbotMotorCmd, 16)?;
        Ok(Self { link, bus, decoder: FrameDecoder::new(), vel_cmd, motor_cmd, rx_buf: Vec::new(), last_timesync: None, malformed: 0 })
    }

    /// Sends pending bus commands to the board.
    pub fn push_commands(&mut self) -> io::Result<()> {
        let mut out = Vec::new();
        for msg in self.vel_cmd.drain() {
            if let Ok(t) = msg.decode::<Twist2D>() {
                encode_frame_into(&SerialFrame::new(topics::TWIST_COMMAND, t.to_bytes()), &mut out).expect("small");
            }
        }
        for msg in self.motor_cmd.drain() {
            if let Ok(c) = msg.decode::<WheelCommand>() {
                encode_frame_into(&SerialFrame::new(topics::WHEEL_COMMAND, c.to_bytes()), &mut out).expect("small");
            }
        }
        if out.is_empty() {
            Ok(())
        } else {
            self.link.send(&out)
        }
    }

    pub fn send_timesync(&mut self, host_utime: u64) -> io::Result<()> {
        let mut out = Vec::new();
        encode_frame_into(&SerialFrame::new(topics::TIMESYNC, TimeSync { host_utime, board_utime: 0 }.to_bytes()), &mut out)
            .expect("small");
        self.link.send(&out)
    }

    /// Reads board output and republishes it on the bus.
    pub fn pull_readings(&mut self) -> io::Result<()> {
        self.rx_buf.clear();
        self.link.recv_available(&mut self.rx_buf)?;
        if self.rx_buf.is_empty() {
            return Ok(());
        }
        self.decoder.push(&self.rx_buf);
        let frames: Vec<SerialFrame> = self.decoder.drain_frames().collect();
        for f in frames {
            let ok = match f.topic_id {
                topics::ODOMETRY => Pose2D::from_bytes(&f.payload).map(|p| {
                    let _ = self.bus.publish(Channel::Odometry, &p);
                }),
                topics::ENCODERS => EncoderReading::from_bytes(&f.payload).map(|e| {
                    let _ = self.bus.publish(Channel::MbotEncoders, &e);
                }),
                topics::TIMESYNC => TimeSync::from_bytes(&f.payload).map(|t| self.last_timesync = Some(t)),
                _ => Ok(()),
            };
            if ok.is_err() {
                self.malformed += 1;
            }
        }
        Ok(())
    }

    pub fn poll(&mut self) -> io::Result<()> {
        self.push_commands()?;
        self.pull_readings()
    }

    pub fn last_timesync(&self) -> Option<TimeSync> {
        self.last_timesync
    }

    pub fn decode_stats(&self) -> DecodeStats {
        self.decoder.stats()
    }

    pub fn malformed_payloads(&self) -> u64 {
        self.malformed
    }
}
