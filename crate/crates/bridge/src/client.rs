//! Blocking client for the bridge, for plain sequential robot programs.

use std::collections::{HashMap, VecDeque};
use std::io;
use std::net::{TcpStream, ToSocketAddrs};
use std::thread;
use std::time::{Duration, Instant};

use mbot_core::messages::{LidarScan, Path2D, PayloadKind, ResetRequest, SlamMode, SlamModeCommand};
use mbot_core::{Channel, OccupancyGrid, Pose2D, Twist2D};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;
use thiserror::Error;
use tungstenite::{Message, WebSocket};

use crate::envelope::{decode_grid, schema_fields, Envelope, Op, PlanRequestData, NO_DATA, PLAN_REQUEST};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("invalid bridge address `{0}` (expected ws://host:port)")]
    Url(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("timed out after {waited:?} waiting for {channel}")]
    Timeout { channel: String, waited: Duration },
    #[error("schema mismatch on {channel}: expected fields {expected:?}, received {received}")]
    SchemaMismatch { channel: String, expected: Vec<&'static str>, received: String },
    #[error("bridge rejected {channel}: {msg}")]
    Remote { channel: String, msg: String },
}

impl From<tungstenite::Error> for ClientError {
    fn from(e: tungstenite::Error) -> Self {
        ClientError::Transport(e.to_string())
    }
}

impl From<io::Error> for ClientError {
    fn from(e: io::Error) -> Self {
        ClientError::Transport(e.to_string())
    }
}

/// Result of [`RobotHandle::drive_path`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrivePathOutcome {
    pub success: bool,
    /// Distance from the last observed pose to the final waypoint, meters.
    pub final_error: f64,
    pub elapsed: Duration,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrivePathOptions {
    /// Success radius around the final waypoint, meters.
    pub tolerance: f64,
    /// Give up after this long. `None` scales with path length.
    pub timeout: Option<Duration>,
    pub poll_interval: Duration,
}

impl Default for DrivePathOptions {
    fn default() -> Self {
        Self { tolerance: 0.15, timeout: None, poll_interval: Duration::from_millis(40) }
    }
}

impl DrivePathOptions {
    pub fn timeout_for(&self, path: &Path2D) -> Duration {
        self.timeout.unwrap_or_else(|| Duration::from_secs_f64(10.0 + 8.0 * path.length()))
    }
}

struct Target {
    host: String,
    port: u16,
    path: String,
}

fn parse_url(url: &str) -> Result<Target, ClientError> {
    let rest = url.strip_prefix("ws://").ok_or_else(|| ClientError::Url(url.to_string()))?;
    let (authority, path) = match rest.find('/') {
        Some(i) => (&rest[..i], &rest[i..]),
        None => (rest, "/"),
    };
    let (host, port) = match authority.rsplit_once(':') {
        Some((h, p)) if !h.ends_with(']') || h.starts_with('[') => {
            (h.trim_start_matches('[').trim_end_matches(']'), p.parse().map_err(|_| ClientError::Url(url.to_string()))?)
        }
        _ => (authority, crate::server::DEFAULT_PORT),
    };
    if host.is_empty() {
        return Err(ClientError::Url(url.to_string()));
    }
    Ok(Target { host: host.to_string(), port, path: path.to_string() })
}

/// One websocket session with the bridge. Calls block until answered or until
/// the handle's timeout (default 1 s) runs out.
pub struct RobotHandle {
    url: String,
    ws: WebSocket<TcpStream>,
    timeout: Duration,
    retry_interval: Duration,
    inbox: HashMap<String, VecDeque<Envelope>>,
}

impl RobotHandle {
    pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(1);

    pub fn connect(url: &str) -> Result<Self, ClientError> {
        let t = parse_url(url)?;
        let addr = (t.host.as_str(), t.port)
            .to_socket_addrs()?
            .next()
            .ok_or_else(|| ClientError::Url(url.to_string()))?;
        let stream = TcpStream::connect_timeout(&addr, Duration::from_secs(3))?;
        stream.set_nodelay(true)?;
        stream.set_read_timeout(Some(Duration::from_secs(3)))?;
        let host = if t.host.contains(':') { format!("[{}]", t.host) } else { t.host.clone() };
        let request = format!("ws://{host}:{}{}", t.port, t.path);
        let (ws, _) = tungstenite::client(request.as_str(), stream).map_err(|e| ClientError::Transport(e.to_string()))?;
        Ok(Self {
            url: url.to_string(),
            ws,
            timeout: Self::DEFAULT_TIMEOUT,
            retry_interval: Duration::from_millis(20),
            inbox: HashMap::new(),
        })
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    pub fn timeout(&self) -> Duration {
        self.timeout
    }

    pub fn set_timeout(&mut self, timeout: Duration) {
        self.timeout = timeout;
    }

    fn send(&mut self, env: &Envelope) -> Result<(), ClientError> {
        self.ws.send(Message::Text(env.to_json()))?;
        Ok(())
    }

    /// Next envelope from the bridge, or `None` once `deadline` passes.
    fn recv_until(&mut self, deadline: Instant) -> Result<Option<Envelope>, ClientError> {
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            if left.is_zero() {
                return Ok(None);
            }
            self.ws.get_ref().set_read_timeout(Some(left.max(Duration::from_millis(1))))?;
            match self.ws.read() {
                Ok(Message::Text(t)) => {
                    return Envelope::parse(&t)
                        .map(Some)
                        .map_err(|e| ClientError::Transport(format!("malformed envelope from bridge: {e}")));
                }
                Ok(Message::Close(_)) => return Err(ClientError::Transport("bridge closed the connection".into())),
                Ok(_) => {}
                Err(tungstenite::Error::Io(e)) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {}
                Err(e) => return Err(e.into()),
            }
        }
    }

    /// Waits for the answer to a request on `channel`, stashing stream traffic.
    fn await_reply(&mut self, channel: &str, deadline: Instant) -> Result<Option<Envelope>, ClientError> {
        while let Some(env) = self.recv_until(deadline)? {
            let same = env.channel.as_deref() == Some(channel);
            match env.op {
                Op::Response | Op::Error if same => return Ok(Some(env)),
                Op::Error if env.channel.is_none() => {
                    return Err(ClientError::Remote { channel: channel.to_string(), msg: env.msg.unwrap_or_default() })
                }
                _ => {
                    if let Some(c) = env.channel.clone() {
                        self.inbox.entry(c).or_default().push_back(env);
                    }
                }
            }
        }
        Ok(None)
    }

    /// One request without retrying. `Ok(None)` means the bridge has no data yet.
    pub fn try_request(&mut self, channel: &str, as_bytes: bool) -> Result<Option<(u64, Value)>, ClientError> {
        let mut req = Envelope::request(channel);
        req.as_bytes = as_bytes;
        self.send(&req)?;
        let deadline = Instant::now() + self.timeout;
        match self.await_reply(channel, deadline)? {
            None => Err(ClientError::Timeout { channel: channel.to_string(), waited: self.timeout }),
            Some(env) if env.op == Op::Response => Ok(Some((env.utime.unwrap_or(0), env.data.unwrap_or(Value::Null)))),
            Some(env) => {
                let msg = env.msg.unwrap_or_default();
                if msg == NO_DATA {
                    Ok(None)
                } else {
                    Err(ClientError::Remote { channel: channel.to_string(), msg })
                }
            }
        }
    }

    /// Latest value on `channel`, retrying while the bridge has none until the
    /// timeout expires.
    pub fn request(&mut self, channel: &str, as_bytes: bool) -> Result<(u64, Value), ClientError> {
        let start = Instant::now();
        loop {
            if let Some(v) = self.try_request(channel, as_bytes)? {
                return Ok(v);
            }
            let left = self.timeout.saturating_sub(start.elapsed());
            if left.is_zero() {
                return Err(ClientError::Timeout { channel: channel.to_string(), waited: start.elapsed() });
            }
            thread::sleep(self.retry_interval.min(left));
        }
    }

    fn read_typed<T: DeserializeOwned>(&mut self, channel: Channel) -> Result<T, ClientError> {
        let (_, data) = self.request(channel.name(), false)?;
        decode_typed(channel.name(), schema_fields(channel.kind()), data)
    }

    pub fn publish<T: Serialize>(&mut self, channel: &str, data: &T) -> Result<(), ClientError> {
        let value = serde_json::to_value(data).map_err(|e| ClientError::Transport(e.to_string()))?;
        self.send(&Envelope::publish(channel, value))
    }

    pub fn drive(&mut self, vx: f64, vy: f64, wz: f64) -> Result<(), ClientError> {
        self.publish(Channel::MbotVelCmd.name(), &Twist2D::new(vx, vy, wz))
    }

    pub fn stop(&mut self) -> Result<(), ClientError> {
        self.drive(0.0, 0.0, 0.0)
    }

    pub fn read_odometry(&mut self) -> Result<Pose2D, ClientError> {
        self.read_typed(Channel::Odometry)
    }

    pub fn read_slam_pose(&mut self) -> Result<Pose2D, ClientError> {
        self.read_typed(Channel::SlamPose)
    }

    pub fn read_lidar(&mut self) -> Result<LidarScan, ClientError> {
        self.read_typed(Channel::Lidar)
    }

    pub fn read_path(&mut self) -> Result<Path2D, ClientError> {
        self.read_typed(Channel::ControllerPath)
    }

    pub fn read_map(&mut self) -> Result<OccupancyGrid, ClientError> {
        let (_, data) = self.request(Channel::SlamMap.name(), true)?;
        decode_grid(Channel::SlamMap.name(), &data).map_err(|e| ClientError::SchemaMismatch {
            channel: Channel::SlamMap.name().into(),
            expected: schema_fields(PayloadKind::Grid).to_vec(),
            received: format!("{} ({e})", describe(&data)),
        })
    }

    /// SLAM pose when SLAM is publishing, odometry otherwise.
    pub fn read_pose(&mut self) -> Result<Pose2D, ClientError> {
        match self.try_request(Channel::SlamPose.name(), false)? {
            Some((_, data)) => decode_typed(Channel::SlamPose.name(), schema_fields(PayloadKind::Pose), data),
            None => self.read_odometry(),
        }
    }

    pub fn set_slam_mode(&mut self, mode: SlamMode) -> Result<(), ClientError> {
        self.publish(Channel::SlamMode.name(), &SlamModeCommand { utime: 0, mode })
    }

    pub fn reset_slam(&mut self) -> Result<(), ClientError> {
        self.publish(Channel::SlamReset.name(), &ResetRequest { utime: 0 })
    }

    /// Plans from the robot's current pose on the latest SLAM map.
    pub fn plan_path(&mut self, goal: Pose2D) -> Result<Path2D, ClientError> {
        self.plan(PlanRequestData { goal, start: None })
    }

    pub fn plan_path_from(&mut self, start: Pose2D, goal: Pose2D) -> Result<Path2D, ClientError> {
        self.plan(PlanRequestData { goal, start: Some(start) })
    }

    fn plan(&mut self, req: PlanRequestData) -> Result<Path2D, ClientError> {
        let data = serde_json::to_value(req).map_err(|e| ClientError::Transport(e.to_string()))?;
        let mut env = Envelope::request(PLAN_REQUEST);
        env.data = Some(data);
        self.send(&env)?;
        let deadline = Instant::now() + self.timeout.max(Duration::from_secs(5));
        match self.await_reply(PLAN_REQUEST, deadline)? {
            None => Err(ClientError::Timeout { channel: PLAN_REQUEST.into(), waited: self.timeout }),
            Some(env) if env.op == Op::Response => {
                decode_typed(PLAN_REQUEST, schema_fields(PayloadKind::Path), env.data.unwrap_or(Value::Null))
            }
            Some(env) => Err(ClientError::Remote { channel: PLAN_REQUEST.into(), msg: env.msg.unwrap_or_default() }),
        }
    }

    pub fn drive_path(&mut self, path: &Path2D) -> Result<DrivePathOutcome, ClientError> {
        self.drive_path_with(path, &DrivePathOptions::default())
    }

    /// Hands `path` to the tracker and waits until the robot is within the
    /// tolerance of its last waypoint. On timeout the robot is stopped.
    pub fn drive_path_with(&mut self, path: &Path2D, opts: &DrivePathOptions) -> Result<DrivePathOutcome, ClientError> {
        let start = Instant::now();
        let Some(goal) = path.poses.last().copied() else {
            return Ok(DrivePathOutcome { success: true, final_error: 0.0, elapsed: start.elapsed() });
        };
        self.publish(Channel::ControllerPath.name(), path)?;
        let limit = opts.timeout_for(path);
        loop {
            let pose = self.read_pose()?;
            let err = pose.distance_to(&goal);
            if err <= opts.tolerance {
                return Ok(DrivePathOutcome { success: true, final_error: err, elapsed: start.elapsed() });
            }
            if start.elapsed() >= limit {
                self.publish(Channel::ControllerPath.name(), &Path2D::default())?;
                self.stop()?;
                return Ok(DrivePathOutcome { success: false, final_error: err, elapsed: start.elapsed() });
            }
            thread::sleep(opts.poll_interval);
        }
    }

    pub fn subscribe(&mut self, channel: &str) -> Result<(), ClientError> {
        self.send(&Envelope::subscribe(channel))
    }

    pub fn unsubscribe(&mut self, channel: &str) -> Result<(), ClientError> {
        self.send(&Envelope::unsubscribe(channel))?;
        self.inbox.remove(channel);
        Ok(())
    }

    /// Next streamed message on a subscribed channel, waiting up to `timeout`.
    pub fn next_message(&mut self, channel: &str, timeout: Duration) -> Result<Option<(u64, Value)>, ClientError> {
        let deadline = Instant::now() + timeout;
        loop {
            if let Some(env) = self.inbox.get_mut(channel).and_then(VecDeque::pop_front) {
                if env.op == Op::Error {
                    return Err(ClientError::Remote { channel: channel.into(), msg: env.msg.unwrap_or_default() });
                }
                return Ok(Some((env.utime.unwrap_or(0), env.data.unwrap_or(Value::Null))));
            }
            match self.recv_until(deadline)? {
                None => return Ok(None),
                Some(env) => {
                    if let Some(c) = env.channel.clone() {
                        self.inbox.entry(c).or_default().push_back(env);
                    }
                }
            }
        }
    }

    pub fn close(mut self) -> Result<(), ClientError> {
        self.ws.close(None)?;
        let deadline = Instant::now() + Duration::from_millis(500);
        while Instant::now() < deadline {
            match self.ws.read() {
                Ok(_) => {}
                Err(tungstenite::Error::Io(e)) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {}
                Err(_) => break,
            }
        }
        Ok(())
    }
}

fn describe(data: &Value) -> String {
    match data.as_object() {
        Some(o) => format!("{:?}", o.keys().collect::<Vec<_>>()),
        None => data.to_string(),
    }
}

fn decode_typed<T: DeserializeOwned>(channel: &str, expected: &'static [&'static str], data: Value) -> Result<T, ClientError> {
    let extra = data.as_object().map_or(true, |o| o.keys().any(|k| !expected.contains(&k.as_str())));
    let received = describe(&data);
    if extra {
        return Err(ClientError::SchemaMismatch { channel: channel.into(), expected: expected.to_vec(), received });
    }
    serde_json::from_value(data).map_err(|e| ClientError::SchemaMismatch {
        channel: channel.into(),
        expected: expected.to_vec(),
        received: format!("{received} ({e})"),
    })
}
