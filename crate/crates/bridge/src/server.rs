//! Websocket bridge between network clients and the in-process bus, plus a
//! plain HTTP file server for the browser app on the same port.

use std::collections::BTreeMap;
use std::io::{self, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::{Component, Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use mbot_core::bus::{Bus, Notify, Subscription};
use mbot_core::nav::{plan_path, PlannerConfig};
use mbot_core::{Channel, OccupancyGrid, Pose2D};
use serde_json::Value;
use tungstenite::protocol::WebSocketConfig;
use tungstenite::{Message, WebSocket};

use crate::envelope::{
    from_data, message_to_json, publish_json, Envelope, Op, PlanRequestData, NO_DATA, PLAN_REQUEST, PLAN_REQUEST_FIELDS,
};

pub const DEFAULT_PORT: u16 = 8765;

/// Idle wait between socket polls of one connection.
const POLL_INTERVAL: Duration = Duration::from_millis(2);
/// Outbound bytes buffered for one client before further messages are dropped.
const MAX_WRITE_BUFFER: usize = 4 << 20;

#[derive(Debug, Clone)]
pub struct BridgeConfig {
    /// Per-client forwarding queue length per subscribed channel.
    pub client_queue: usize,
    /// Directory served over plain HTTP. Without one a placeholder page is served at `/`.
    pub web_root: Option<PathBuf>,
    pub planner: PlannerConfig,
}

impl Default for BridgeConfig {
    fn default() -> Self {
        Self { client_queue: 16, web_root: None, planner: PlannerConfig::default() }
    }
}

#[derive(Debug, Default)]
pub struct BridgeStats {
    pub clients: AtomicUsize,
    pub connections: AtomicU64,
    pub forwarded: AtomicU64,
    pub errors_sent: AtomicU64,
}

struct Shared {
    bus: Bus,
    cfg: BridgeConfig,
    stop: AtomicBool,
    stats: BridgeStats,
}

pub struct BridgeServer {
    addr: SocketAddr,
    shared: Arc<Shared>,
    accept: Option<JoinHandle<()>>,
}

impl BridgeServer {
    /// Binds the listener immediately, so a port in use fails here.
    pub fn bind(addr: impl ToSocketAddrs, bus: Bus, cfg: BridgeConfig) -> io::Result<Self> {
        let listener = TcpListener::bind(addr)?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let shared = Arc::new(Shared { bus, cfg, stop: AtomicBool::new(false), stats: BridgeStats::default() });
        let accept = {
            let shared = shared.clone();
            thread::Builder::new().name("bridge-accept".into()).spawn(move || accept_loop(listener, shared))?
        };
        log::info!("bridge listening on {addr}");
        Ok(Self { addr, shared, accept: Some(accept) })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn stats(&self) -> &BridgeStats {
        &self.shared.stats
    }

    pub fn client_count(&self) -> usize {
        self.shared.stats.clients.load(Ordering::SeqCst)
    }

    /// Stops accepting, closes every client and waits for the acceptor to exit.
    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        self.shared.stop.store(true, Ordering::SeqCst);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

impl Drop for BridgeServer {
    fn drop(&mut self) {
        self.stop();
    }
}

fn accept_loop(listener: TcpListener, shared: Arc<Shared>) {
    let mut workers: Vec<JoinHandle<()>> = Vec::new();
    while !shared.stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, peer)) => {
                shared.stats.connections.fetch_add(1, Ordering::SeqCst);
                let shared = shared.clone();
                let spawned = thread::Builder::new().name(format!("bridge-{peer}")).spawn(move || {
                    if let Err(e) = handle_connection(stream, &shared) {
                        log::debug!("connection {peer} ended: {e}");
                    }
                });
                match spawned {
                    Ok(h) => workers.push(h),
                    Err(e) => log::warn!("cannot spawn connection thread: {e}"),
                }
                workers.retain(|h| !h.is_finished());
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(5)),
            Err(e) => {
                log::warn!("accept failed: {e}");
                thread::sleep(Duration::from_millis(20));
            }
        }
    }
    for h in workers {
        let _ = h.join();
    }
}

/// Waits until the full HTTP request head is buffered, without consuming it.
fn peek_head(stream: &TcpStream, timeout: Duration) -> io::Result<(String, usize)> {
    let deadline = Instant::now() + timeout;
    let mut buf = vec![0u8; 16 * 1024];
    loop {
        stream.set_read_timeout(Some(deadline.saturating_duration_since(Instant::now()).max(Duration::from_millis(1))))?;
        let n = stream.peek(&mut buf)?;
        if n == 0 {
            return Err(io::Error::new(io::ErrorKind::UnexpectedEof, "closed before request"));
        }
        if let Some(end) = buf[..n].windows(4).position(|w| w == b"\r\n\r\n") {
            return Ok((String::from_utf8_lossy(&buf[..end]).into_owned(), end + 4));
        }
        if n == buf.len() {
            return Err(io::Error::new(io::ErrorKind::InvalidData, "request head too large"));
        }
        if Instant::now() >= deadline {
            return Err(io::Error::new(io::ErrorKind::TimedOut, "incomplete request head"));
        }
        thread::sleep(Duration::from_millis(1));
    }
}

fn is_upgrade(head: &str) -> bool {
    head.lines().skip(1).any(|l| {
        let mut kv = l.splitn(2, ':');
        let k = kv.next().unwrap_or("").trim();
        let v = kv.next().unwrap_or("").trim();
        k.eq_ignore_ascii_case("upgrade") && v.eq_ignore_ascii_case("websocket")
    })
}

fn handle_connection(stream: TcpStream, shared: &Shared) -> io::Result<()> {
    stream.set_nodelay(true)?;
    let (head, head_len) = peek_head(&stream, Duration::from_secs(5))?;
    if is_upgrade(&head) {
        shared.stats.clients.fetch_add(1, Ordering::SeqCst);
        let r = run_websocket(stream, shared);
        shared.stats.clients.fetch_sub(1, Ordering::SeqCst);
        r
    } else {
        serve_http(stream, &head, head_len, shared.cfg.web_root.as_deref())
    }
}

const PLACEHOLDER_INDEX: &str = "<!doctype html>\n<html><head><meta charset=\"utf-8\"><title>MBot bridge</title></head>\n<body><h1>MBot bridge</h1><p>The web app is not installed. Websocket endpoint: <code>/ws</code>.</p></body></html>\n";

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()).unwrap_or("") {
        "html" | "htm" => "text/html; charset=utf-8",
        "js" | "mjs" => "text/javascript",
        "css" => "text/css",
        "json" | "map" => "application/json",
        "svg" => "image/svg+xml",
        "png" => "image/png",
        "ico" => "image/x-icon",
        "wasm" => "application/wasm",
        _ => "application/octet-stream",
    }
}

fn serve_http(mut stream: TcpStream, head: &str, head_len: usize, root: Option<&Path>) -> io::Result<()> {
    let mut discard = vec![0u8; head_len];
    stream.read_exact(&mut discard)?;
    let mut parts = head.lines().next().unwrap_or("").split_whitespace();
    let method = parts.next().unwrap_or("");
    let target = parts.next().unwrap_or("/");
    let path = target.split(['?', '#']).next().unwrap_or("/");
    let rel = path.trim_start_matches('/');
    let rel = if rel.is_empty() { "index.html" } else { rel };

    let (status, ctype, body): (&str, &str, Vec<u8>) = if method != "GET" && method != "HEAD" {
        ("405 Method Not Allowed", "text/plain", b"method not allowed\n".to_vec())
    } else if Path::new(rel).components().any(|c| !matches!(c, Component::Normal(_))) {
        ("400 Bad Request", "text/plain", b"bad path\n".to_vec())
    } else {
        let file = root.map(|r| r.join(rel)).filter(|p| p.is_file());
        match file {
            Some(p) => match std::fs::read(&p) {
                Ok(b) => ("200 OK", content_type(&p), b),
                Err(_) => ("500 Internal Server Error", "text/plain", b"read error\n".to_vec()),
            },
            None if rel == "index.html" => ("200 OK", "text/html; charset=utf-8", PLACEHOLDER_INDEX.as_bytes().to_vec()),
            None => ("404 Not Found", "text/plain", b"not found\n".to_vec()),
        }
    };
    write!(stream, "HTTP/1.1 {status}\r\nContent-Type: {ctype}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n", body.len())?;
    if method != "HEAD" {
        stream.write_all(&body)?;
    }
    stream.flush()
}

struct Session<'a> {
    shared: &'a Shared,
    ws: WebSocket<TcpStream>,
    subs: BTreeMap<Channel, Subscription>,
    notify: Arc<Notify>,
    backlogged: bool,
}

enum Flow {
    Continue,
    Closed,
}

fn run_websocket(stream: TcpStream, shared: &Shared) -> io::Result<()> {
    stream.set_read_timeout(Some(Duration::from_secs(5)))?;
    let config = WebSocketConfig { max_write_buffer_size: MAX_WRITE_BUFFER, ..WebSocketConfig::default() };
    let ws = tungstenite::accept_with_config(stream, Some(config)).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))?;
    ws.get_ref().set_nonblocking(true)?;
    let mut session = Session { shared, ws, subs: BTreeMap::new(), notify: Arc::new(Notify::new()), backlogged: false };
    let r = session.run();
    // subscriptions unregister on drop
    session.subs.clear();
    r
}

impl Session<'_> {
    fn run(&mut self) -> io::Result<()> {
        loop {
            if self.shared.stop.load(Ordering::SeqCst) {
                let _ = self.ws.close(None);
                let _ = self.ws.flush();
                return Ok(());
            }
            let mut busy = false;
            loop {
                match self.ws.read() {
                    Ok(Message::Text(text)) => {
                        busy = true;
                        for reply in self.handle_text(&text) {
                            self.send(reply)?;
                        }
                    }
                    Ok(Message::Binary(_)) => {
                        busy = true;
                        self.send(Envelope::error(None, "binary frames are not supported; send JSON text"))?;
                    }
                    Ok(_) => busy = true,
                    Err(tungstenite::Error::Io(e)) if e.kind() == io::ErrorKind::WouldBlock => break,
                    Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => return Ok(()),
                    Err(e) => return Err(io::Error::new(io::ErrorKind::Other, e.to_string())),
                }
            }
            if !self.backlogged {
                busy |= self.forward()?;
            }
            if let Flow::Closed = self.flush()? {
                return Ok(());
            }
            if !busy {
                self.notify.wait_timeout(POLL_INTERVAL);
            }
        }
    }

    fn forward(&mut self) -> io::Result<bool> {
        let mut out = Vec::new();
        for (ch, sub) in &self.subs {
            for m in sub.drain() {
                match message_to_json(&m, false) {
                    Ok(data) => out.push(Envelope::response(ch.name(), m.utime, data)),
                    Err(e) => log::warn!("cannot forward {ch}: {e}"),
                }
            }
        }
        let any = !out.is_empty();
        for e in out {
            self.shared.stats.forwarded.fetch_add(1, Ordering::Relaxed);
            self.send(e)?;
        }
        Ok(any)
    }

    fn send(&mut self, env: Envelope) -> io::Result<()> {
        if env.op == Op::Error {
            self.shared.stats.errors_sent.fetch_add(1, Ordering::Relaxed);
        }
        match self.ws.write(Message::Text(env.to_json())) {
            Ok(()) => Ok(()),
            Err(tungstenite::Error::Io(e)) if e.kind() == io::ErrorKind::WouldBlock => {
                self.backlogged = true;
                Ok(())
            }
            Err(tungstenite::Error::WriteBufferFull(_)) => {
                self.backlogged = true;
                Ok(())
            }
            Err(e) => Err(io::Error::new(io::ErrorKind::Other, e.to_string())),
        }
    }

    fn flush(&mut self) -> io::Result<Flow> {
        match self.ws.flush() {
            Ok(()) => {
                self.backlogged = false;
                Ok(Flow::Continue)
            }
            Err(tungstenite::Error::Io(e)) if e.kind() == io::ErrorKind::WouldBlock => {
                self.backlogged = true;
                Ok(Flow::Continue)
            }
            Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => Ok(Flow::Closed),
            Err(e) => Err(io::Error::new(io::ErrorKind::Other, e.to_string())),
        }
    }

    fn handle_text(&mut self, text: &str) -> Vec<Envelope> {
        let env = match Envelope::parse(text) {
            Ok(e) => e,
            Err(e) => return vec![Envelope::error(None, format!("malformed envelope: {e}"))],
        };
        let Some(name) = env.channel.clone() else {
            return vec![Envelope::error(None, "missing channel")];
        };
        if name == PLAN_REQUEST {
            return vec![match env.op {
                Op::Request => self.plan(&env),
                _ => Envelope::error(Some(&name), "PLAN_REQUEST only accepts requests"),
            }];
        }
        let channel: Channel = match name.parse() {
            Ok(c) => c,
            Err(e) => return vec![Envelope::error(Some(&name), format!("{e}"))],
        };
        let bus = &self.shared.bus;
        match env.op {
            Op::Subscribe => {
                if !self.subs.contains_key(&channel) {
                    match bus.subscribe_with_notify(channel, self.shared.cfg.client_queue, self.notify.clone()) {
                        Ok(s) => {
                            self.subs.insert(channel, s);
                        }
                        Err(e) => return vec![Envelope::error(Some(&name), e.to_string())],
                    }
                }
                vec![]
            }
            Op::Unsubscribe => {
                self.subs.remove(&channel);
                vec![]
            }
            Op::Publish => match &env.data {
                None => vec![Envelope::error(Some(&name), "publish requires data")],
                Some(data) => match publish_json(bus, channel, data) {
                    Ok(()) => vec![],
                    Err(e) => vec![Envelope::error(Some(&name), e.to_string())],
                },
            },
            Op::Request => match bus.latest(channel) {
                None => vec![Envelope::error(Some(&name), NO_DATA)],
                Some(m) => match message_to_json(&m, env.as_bytes) {
                    Ok(data) => vec![Envelope::response(&name, m.utime, data)],
                    Err(e) => vec![Envelope::error(Some(&name), e.to_string())],
                },
            },
            Op::Response | Op::Error => vec![Envelope::error(Some(&name), "clients may not send response or error envelopes")],
        }
    }

    fn plan(&self, env: &Envelope) -> Envelope {
        let bus = &self.shared.bus;
        let req: PlanRequestData = match env.data.as_ref().map(|d| from_data(PLAN_REQUEST, d, PLAN_REQUEST_FIELDS)) {
            None => return Envelope::error(Some(PLAN_REQUEST), "request requires data with a goal pose"),
            Some(Err(e)) => return Envelope::error(Some(PLAN_REQUEST), e.to_string()),
            Some(Ok(r)) => r,
        };
        let Some(map) = bus.latest_decoded::<OccupancyGrid>(Channel::SlamMap) else {
            return Envelope::error(Some(PLAN_REQUEST), "no map to plan on");
        };
        let start = req
            .start
            .or_else(|| bus.latest_decoded::<Pose2D>(Channel::SlamPose))
            .or_else(|| bus.latest_decoded::<Pose2D>(Channel::Odometry));
        let Some(start) = start else {
            return Envelope::error(Some(PLAN_REQUEST), "no start pose available");
        };
        match plan_path(&map, &start, &req.goal, &self.shared.cfg.planner) {
            Ok(mut r) => {
                let now = bus.now_utime();
                r.path.utime = now;
                Envelope::response(PLAN_REQUEST, now, serde_json::to_value(&r.path).unwrap_or(Value::Null))
            }
            Err(e) => Envelope::error(Some(PLAN_REQUEST), format!("no path: {e}")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn upgrade_detection() {
        assert!(is_upgrade("GET /ws HTTP/1.1\r\nHost: x\r\nUpgrade: websocket\r\nConnection: Upgrade"));
        assert!(is_upgrade("GET / HTTP/1.1\r\nupgrade:WebSocket"));
        assert!(!is_upgrade("GET / HTTP/1.1\r\nHost: x"));
    }
}
