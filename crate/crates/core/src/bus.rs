//! In-process topic publish/subscribe with bounded, drop-oldest subscriber queues.
//!
//! Publishing never blocks on subscribers: each subscription owns a bounded
//! queue and the oldest message is discarded on overflow. The bus also keeps the
//! most recent message of every channel for `latest` lookups.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::messages::{Channel, Payload, PayloadKind, UnknownChannel};
use crate::wire::{Wire, WireError};
use crate::{messages, OccupancyGrid, Pose2D, Twist2D};

pub const DEFAULT_QUEUE_CAPACITY: usize = 64;

#[derive(Debug, Error)]
pub enum BusError {
    #[error(transparent)]
    UnknownChannel(#[from] UnknownChannel),
    #[error("channel {channel} carries {expected:?} payloads, not {got:?}")]
    WrongType { channel: Channel, expected: PayloadKind, got: PayloadKind },
    #[error("malformed payload for {channel}: {source}")]
    Malformed { channel: Channel, source: WireError },
    #[error("subscription capacity must be at least 1")]
    ZeroCapacity,
}

/// Source of publish timestamps in microseconds.
pub trait Clock: Send + Sync {
    fn now_utime(&self) -> u64;
}

/// Wall-clock microseconds since construction.
#[derive(Debug)]
pub struct MonotonicClock {
    start: Instant,
}

impl MonotonicClock {
    pub fn new() -> Self {
        Self { start: Instant::now() }
    }
}

impl Default for MonotonicClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for MonotonicClock {
    fn now_utime(&self) -> u64 {
        self.start.elapsed().as_micros() as u64
    }
}

/// Clock advanced explicitly, owned by the simulator.
#[derive(Debug, Default)]
pub struct ManualClock {
    utime: AtomicU64,
}

impl ManualClock {
    pub fn new(start: u64) -> Self {
        Self { utime: AtomicU64::new(start) }
    }

    pub fn set(&self, utime: u64) {
        self.utime.fetch_max(utime, Ordering::SeqCst);
    }

    pub fn advance(&self, micros: u64) -> u64 {
        self.utime.fetch_add(micros, Ordering::SeqCst) + micros
    }
}

impl Clock for ManualClock {
    fn now_utime(&self) -> u64 {
        self.utime.load(Ordering::SeqCst)
    }
}

#[derive(Debug, Clone)]
pub struct BusMessage {
    pub channel: Channel,
    pub payload: Arc<[u8]>,
    /// Publish time on the bus clock.
    pub utime: u64,
    /// Per-channel delivery order, starting at 1.
    pub seq: u64,
}

impl BusMessage {
    pub fn decode<T: Payload>(&self) -> Result<T, BusError> {
        if T::KIND != self.channel.kind() {
            return Err(BusError::WrongType { channel: self.channel, expected: self.channel.kind(), got: T::KIND });
        }
        T::from_bytes(&self.payload).map_err(|source| BusError::Malformed { channel: self.channel, source })
    }
}

/// Wakes a consumer that waits on several subscriptions at once.
#[derive(Debug, Default)]
pub struct Notify {
    flag: Mutex<bool>,
    cv: Condvar,
}

impl Notify {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn notify(&self) {
        *lock(&self.flag) = true;
        self.cv.notify_all();
    }

    /// Waits until notified or `timeout` elapses; returns whether a notification arrived.
    pub fn wait_timeout(&self, timeout: Duration) -> bool {
        let guard = lock(&self.flag);
        let (mut guard, _) = self
            .cv
            .wait_timeout_while(guard, timeout, |f| !*f)
            .unwrap_or_else(|e| e.into_inner());
        std::mem::replace(&mut *guard, false)
    }
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

#[derive(Debug)]
struct Queue {
    state: Mutex<QueueState>,
    ready: Condvar,
    capacity: usize,
    notify: Option<Arc<Notify>>,
}

#[derive(Debug, Default)]
struct QueueState {
    buf: VecDeque<BusMessage>,
    dropped: u64,
}

impl Queue {
    fn push(&self, msg: BusMessage) {
        let mut st = lock(&self.state);
        if st.buf.len() == self.capacity {
            st.buf.pop_front();
            st.dropped += 1;
        }
        st.buf.push_back(msg);
        drop(st);
        self.ready.notify_one();
    }
}

#[derive(Debug, Default)]
struct Slot {
    latest: Option<BusMessage>,
    subs: Vec<(u64, Arc<Queue>)>,
    seq: u64,
}

struct Inner {
    slots: Vec<Mutex<Slot>>,
    clock: Arc<dyn Clock>,
    next_sub: AtomicU64,
}

/// Handle to the shared bus; clones refer to the same bus.
#[derive(Clone)]
pub struct Bus {
    inner: Arc<Inner>,
}

impl std::fmt::Debug for Bus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Bus").finish_non_exhaustive()
    }
}

impl Default for Bus {
    fn default() -> Self {
        Self::new()
    }
}

impl Bus {
    pub fn new() -> Self {
        Self::with_clock(Arc::new(MonotonicClock::new()))
    }

    pub fn with_clock(clock: Arc<dyn Clock>) -> Self {
        let slots = Channel::ALL.iter().map(|_| Mutex::new(Slot::default())).collect();
        Self { inner: Arc::new(Inner { slots, clock, next_sub: AtomicU64::new(1) }) }
    }

    pub fn now_utime(&self) -> u64 {
        self.inner.clock.now_utime()
    }

    pub fn clock(&self) -> Arc<dyn Clock> {
        self.inner.clock.clone()
    }

    pub fn publish<T: Payload>(&self, channel: Channel, value: &T) -> Result<(), BusError> {
        if T::KIND != channel.kind() {
            return Err(BusError::WrongType { channel, expected: channel.kind(), got: T::KIND });
        }
        self.publish_encoded(channel, value.to_bytes().into());
        Ok(())
    }

    /// Publishes an already-encoded payload after checking it decodes as the channel type.
    pub fn publish_bytes(&self, channel: Channel, bytes: &[u8]) -> Result<(), BusError> {
        validate_payload(channel, bytes)?;
        self.publish_encoded(channel, bytes.into());
        Ok(())
    }

    pub fn publish_named<T: Payload>(&self, channel: &str, value: &T) -> Result<(), BusError> {
        self.publish(channel.parse()?, value)
    }

    fn publish_encoded(&self, channel: Channel, payload: Arc<[u8]>) {
        let mut wake = Vec::new();
        {
            let mut slot = lock(&self.inner.slots[channel.index()]);
            slot.seq += 1;
            let msg = BusMessage { channel, payload, utime: self.inner.clock.now_utime(), seq: slot.seq };
            for (_, q) in &slot.subs {
                q.push(msg.clone());
                if let Some(n) = &q.notify {
                    wake.push(n.clone());
                }
            }
            slot.latest = Some(msg);
        }
        for n in wake {
            n.notify();
        }
    }

    pub fn subscribe(&self, channel: Channel, capacity: usize) -> Result<Subscription, BusError> {
        self.subscribe_inner(channel, capacity, None)
    }

    /// Like [`Bus::subscribe`], also signalling `notify` on every delivery.
    pub fn subscribe_with_notify(&self, channel: Channel, capacity: usize, notify: Arc<Notify>) -> Result<Subscription, BusError> {
        self.subscribe_inner(channel, capacity, Some(notify))
    }

    pub fn subscribe_named(&self, channel: &str, capacity: usize) -> Result<Subscription, BusError> {
        self.subscribe(channel.parse()?, capacity)
    }

    fn subscribe_inner(&self, channel: Channel, capacity: usize, notify: Option<Arc<Notify>>) -> Result<Subscription, BusError> {
        if capacity == 0 {
            return Err(BusError::ZeroCapacity);
        }
        let id = self.inner.next_sub.fetch_add(1, Ordering::Relaxed);
        let queue = Arc::new(Queue { state: Mutex::new(QueueState::default()), ready: Condvar::new(), capacity, notify });
        lock(&self.inner.slots[channel.index()]).subs.push((id, queue.clone()));
        Ok(Subscription { bus: self.clone(), channel, id, queue })
    }

    pub fn latest(&self, channel: Channel) -> Option<BusMessage> {
        lock(&self.inner.slots[channel.index()]).latest.clone()
    }

    pub fn latest_named(&self, channel: &str) -> Result<Option<BusMessage>, BusError> {
        Ok(self.latest(channel.parse()?))
    }

    pub fn latest_decoded<T: Payload>(&self, channel: Channel) -> Option<T> {
        self.latest(channel).and_then(|m| m.decode().ok())
    }

    pub fn subscriber_count(&self, channel: Channel) -> usize {
        lock(&self.inner.slots[channel.index()]).subs.len()
    }
}

fn validate_payload(channel: Channel, bytes: &[u8]) -> Result<(), BusError> {
    let res = match channel.kind() {
        PayloadKind::Twist => Twist2D::from_bytes(bytes).map(drop),
        PayloadKind::Pose => Pose2D::from_bytes(bytes).map(drop),
        PayloadKind::Scan => messages::LidarScan::from_bytes(bytes).map(drop),
        PayloadKind::Grid => OccupancyGrid::from_bytes(bytes).map(drop),
        PayloadKind::Path => messages::Path2D::from_bytes(bytes).map(drop),
        PayloadKind::Mode => messages::SlamModeCommand::from_bytes(bytes).map(drop),
        PayloadKind::Reset => messages::ResetRequest::from_bytes(bytes).map(drop),
        PayloadKind::Encoders => messages::EncoderReading::from_bytes(bytes).map(drop),
        PayloadKind::Wheels => messages::WheelCommand::from_bytes(bytes).map(drop),
    };
    res.map_err(|source| BusError::Malformed { channel, source })
}

/// A live subscription; dropping it unregisters the queue.
#[derive(Debug)]
pub struct Subscription {
    bus: Bus,
    channel: Channel,
    id: u64,
    queue: Arc<Queue>,
}

impl Subscription {
    pub fn channel(&self) -> Channel {
        self.channel
    }

    pub fn try_recv(&self) -> Option<BusMessage> {
        lock(&self.queue.state).buf.pop_front()
    }

    pub fn recv_timeout(&self, timeout: Duration) -> Option<BusMessage> {
        let guard = lock(&self.queue.state);
        let (mut guard, _) = self
            .queue
            .ready
            .wait_timeout_while(guard, timeout, |s| s.buf.is_empty())
            .unwrap_or_else(|e| e.into_inner());
        guard.buf.pop_front()
    }

    pub fn drain(&self) -> Vec<BusMessage> {
        lock(&self.queue.state).buf.drain(..).collect()
    }

    /// Most recent queued message, discarding older ones.
    pub fn take_latest(&self) -> Option<BusMessage> {
        let mut st = lock(&self.queue.state);
        let last = st.buf.pop_back();
        st.buf.clear();
        last
    }

    pub fn len(&self) -> usize {
        lock(&self.queue.state).buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Messages discarded because the queue was full.
    pub fn dropped(&self) -> u64 {
        lock(&self.queue.state).dropped
    }
}

impl Drop for Subscription {
    fn drop(&mut self) {
        lock(&self.bus.inner.slots[self.channel.index()]).subs.retain(|(id, _)| *id != self.id);
    }
}
