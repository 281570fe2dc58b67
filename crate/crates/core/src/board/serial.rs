//! Framing for the board data port.
//!
//! ```text
//! 0xFF 0xFE | len_lo len_hi | len_chk | topic_lo topic_hi | payload ... | data_chk
//! len_chk  = 255 - ((len_lo + len_hi) mod 256)
//! data_chk = 255 - ((topic_lo + topic_hi + sum(payload)) mod 256)
//! ```

use thiserror::Error;

pub const SYNC: u8 = 0xFF;
pub const VERSION: u8 = 0xFE;
pub const HEADER_LEN: usize = 7;
pub const OVERHEAD: usize = HEADER_LEN + 1;
pub const MAX_PAYLOAD: usize = u16::MAX as usize;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SerialFrame {
    pub topic_id: u16,
    pub payload: Vec<u8>,
}

impl SerialFrame {
    pub fn new(topic_id: u16, payload: Vec<u8>) -> Self {
        Self { topic_id, payload }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("payload of {0} bytes exceeds the {MAX_PAYLOAD}-byte frame limit")]
pub struct FrameTooLarge(pub usize);

#[inline]
fn checksum(bytes: impl IntoIterator<Item = u8>) -> u8 {
    255 - bytes.into_iter().fold(0u8, |a, b| a.wrapping_add(b))
}

pub fn encode_frame(frame: &SerialFrame) -> Result<Vec<u8>, FrameTooLarge> {
    let mut out = Vec::with_capacity(frame.payload.len() + OVERHEAD);
    encode_frame_into(frame, &mut out)?;
    Ok(out)
}

pub fn encode_frame_into(frame: &SerialFrame, out: &mut Vec<u8>) -> Result<(), FrameTooLarge> {
    let len = frame.payload.len();
    if len > MAX_PAYLOAD {
        return Err(FrameTooLarge(len));
    }
    let [l0, l1] = (len as u16).to_le_bytes();
    let [t0, t1] = frame.topic_id.to_le_bytes();
    out.extend_from_slice(&[SYNC, VERSION, l0, l1, checksum([l0, l1]), t0, t1]);
    out.extend_from_slice(&frame.payload);
    out.push(checksum([t0, t1].into_iter().chain(frame.payload.iter().copied())));
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DecodeStats {
    pub frames: u64,
    pub bad_length_checksum: u64,
    pub bad_data_checksum: u64,
    /// Bytes skipped while hunting for a sync sequence.
    pub skipped_bytes: u64,
}

impl DecodeStats {
    pub fn checksum_failures(&self) -> u64 {
        self.bad_length_checksum + self.bad_data_checksum
    }
}

enum Probe {
    Frame(SerialFrame, usize),
    Incomplete,
    BadLength,
    BadData,
}

/// Inspects a candidate frame starting at `buf[0]`, which must be the sync pair.
fn probe(buf: &[u8]) -> Probe {
    if buf.len() < HEADER_LEN {
        return Probe::Incomplete;
    }
    let (l0, l1) = (buf[2], buf[3]);
    if checksum([l0, l1]) != buf[4] {
        return Probe::BadLength;
    }
    let len = u16::from_le_bytes([l0, l1]) as usize;
    let total = len + OVERHEAD;
    if buf.len() < total {
        return Probe::Incomplete;
    }
    let body = &buf[5..HEADER_LEN + len];
    if checksum(body.iter().copied()) != buf[total - 1] {
        return Probe::BadData;
    }
    let topic_id = u16::from_le_bytes([buf[5], buf[6]]);
    Probe::Frame(SerialFrame { topic_id, payload: buf[HEADER_LEN..HEADER_LEN + len].to_vec() }, total)
}

fn find_sync(buf: &[u8], from: usize) -> Option<usize> {
    (from..buf.len().saturating_sub(1)).find(|&i| buf[i] == SYNC && buf[i + 1] == VERSION)
}

/// True if a complete, checksum-valid frame starts anywhere after `start`.
fn complete_frame_after(buf: &[u8], start: usize) -> bool {
    let mut i = start + 1;
    while let Some(j) = find_sync(buf, i) {
        if matches!(probe(&buf[j..]), Probe::Frame(..)) {
            return true;
        }
        i = j + 1;
    }
    false
}

/// Extracts every frame from `buf`; returns them with the number of leading
/// bytes consumed. Bytes after the consumed prefix may start a frame.
fn scan(buf: &[u8], stats: &mut DecodeStats, frames: &mut Vec<SerialFrame>) -> usize {
    let mut pos = 0;
    loop {
        let Some(start) = find_sync(buf, pos) else {
            // keep a trailing sync byte that may pair with the next chunk
            let keep = usize::from(buf.last() == Some(&SYNC) && buf.len() > pos);
            let end = buf.len() - keep;
            stats.skipped_bytes += (end.max(pos) - pos) as u64;
            return end.max(pos);
        };
        stats.skipped_bytes += (start - pos) as u64;
        match probe(&buf[start..]) {
            Probe::Frame(f, total) => {
                stats.frames += 1;
                frames.push(f);
                pos = start + total;
            }
            Probe::BadLength => {
                stats.bad_length_checksum += 1;
                stats.skipped_bytes += 1;
                pos = start + 1;
            }
            Probe::BadData => {
                stats.bad_data_checksum += 1;
                stats.skipped_bytes += 1;
                pos = start + 1;
            }
            Probe::Incomplete => {
                // a header that claims more bytes than follow, while a valid
                // frame appears later, was garbage
                if complete_frame_after(buf, start) {
                    stats.skipped_bytes += 1;
                    pos = start + 1;
                } else {
                    return start;
                }
            }
        }
    }
}

/// Decodes all complete frames in `bytes`; the remainder is a possible frame prefix.
pub fn decode_frames(bytes: &[u8]) -> (Vec<SerialFrame>, &[u8], DecodeStats) {
    let mut stats = DecodeStats::default();
    let mut frames = Vec::new();
    let used = scan(bytes, &mut stats, &mut frames);
    (frames, &bytes[used..], stats)
}

/// Incremental decoder for a byte stream arriving in arbitrary chunks.
#[derive(Debug, Default, Clone)]
pub struct FrameDecoder {
    buf: Vec<u8>,
    ready: std::collections::VecDeque<SerialFrame>,
    stats: DecodeStats,
}

impl FrameDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
        let mut frames = Vec::new();
        let used = scan(&self.buf, &mut self.stats, &mut frames);
        self.buf.drain(..used);
        self.ready.extend(frames);
    }

    pub fn next_frame(&mut self) -> Option<SerialFrame> {
        self.ready.pop_front()
    }

    pub fn drain_frames(&mut self) -> impl Iterator<Item = SerialFrame> + '_ {
        self.ready.drain(..)
    }

    pub fn pending_bytes(&self) -> usize {
        self.buf.len()
    }

    pub fn stats(&self) -> DecodeStats {
        self.stats
    }
}
