use std::collections::VecDeque;
use std::io::{self, ErrorKind, Read, Write};
use std::net::TcpStream;
use std::sync::{Arc, Mutex};

/// Non-blocking byte transport between the host serial interface and the board.
pub trait ByteLink: Send {
    fn send(&mut self, bytes: &[u8]) -> io::Result<()>;
    /// Appends whatever bytes are available without blocking; returns how many.
    fn recv_available(&mut self, out: &mut Vec<u8>) -> io::Result<usize>;
}

type Pipe = Arc<Mutex<VecDeque<u8>>>;

/// One end of an in-memory duplex link.
#[derive(Debug, Clone)]
pub struct MemoryLink {
    tx: Pipe,
    rx: Pipe,
}

/// Creates a connected pair of in-memory link ends.
pub fn memory_link() -> (MemoryLink, MemoryLink) {
    let a: Pipe = Arc::default();
    let b: Pipe = Arc::default();
    (MemoryLink { tx: a.clone(), rx: b.clone() }, MemoryLink { tx: b, rx: a })
}

impl ByteLink for MemoryLink {
    fn send(&mut self, bytes: &[u8]) -> io::Result<()> {
        self.tx.lock().unwrap_or_else(|e| e.into_inner()).extend(bytes);
        Ok(())
    }

    fn recv_available(&mut self, out: &mut Vec<u8>) -> io::Result<usize> {
        let mut rx = self.rx.lock().unwrap_or_else(|e| e.into_inner());
        let n = rx.len();
        out.extend(rx.drain(..));
        Ok(n)
    }
}

/// Stream socket transport. The stream is switched to non-blocking mode.
#[derive(Debug)]
pub struct TcpLink {
    stream: TcpStream,
    pending: Vec<u8>,
}

impl TcpLink {
    pub fn new(stream: TcpStream) -> io::Result<Self> {
        stream.set_nonblocking(true)?;
        stream.set_nodelay(true)?;
        Ok(Self { stream, pending: Vec::new() })
    }

    fn flush_pending(&mut self) -> io::Result<()> {
        while !self.pending.is_empty() {
            match self.stream.write(&self.pending) {
                Ok(0) => return Err(ErrorKind::WriteZero.into()),
                Ok(n) => {
                    self.pending.drain(..n);
                }
                Err(e) if e.kind() == ErrorKind::WouldBlock => return Ok(()),
                Err(e) if e.kind() == ErrorKind::Interrupted => {}
                Err(e) => return Err(e),
            }
        }
        Ok(())
    }
}

impl ByteLink for TcpLink {
    fn send(&mut self, bytes: &[u8]) -> io::Result<()> {
        self.pending.extend_from_slice(bytes);
        self.flush_pending()
    }

    fn recv_available(&mut self, out: &mut Vec<u8>) -> io::Result<usize> {
        self.flush_pending()?;
        let mut total = 0;
        let mut chunk = [0u8; 4096];
        loop {
            match self.stream.read(&mut chunk) {
                Ok(0) => {
                    return if total == 0 { Err(ErrorKind::UnexpectedEof.into()) } else { Ok(total) };
                }
                Ok(n) => {
                    out.extend_from_slice(&chunk[..n]);
                    total += n;
                }
                Err(e) if e.kind() == ErrorKind::WouldBlock => return Ok(total),
                Err(e) if e.kind() == ErrorKind::Interrupted => {}
                Err(e) => return Err(e),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn memory_link_is_duplex() {
        let (mut a, mut b) = memory_link();
        a.send(b"hello").unwrap();
        b.send(b"yo").unwrap();
        let mut got = Vec::new();
        assert_eq!(b.recv_available(&mut got).unwrap(), 5);
        assert_eq!(got, b"hello");
        got.clear();
        a.recv_available(&mut got).unwrap();
        assert_eq!(got, b"yo");
        assert_eq!(a.recv_available(&mut got).unwrap(), 0);
    }
}
