//! Compact little-endian binary encoding of every catalog payload. Used for bus
//! payloads and serial frame bodies.

use thiserror::Error;

use crate::messages::{EncoderReading, LidarScan, Path2D, ResetRequest, SlamMode, SlamModeCommand, TimeSync, WheelCommand};
use crate::{OccupancyGrid, Pose2D, Twist2D};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("payload truncated: needed {needed} more bytes")]
    Truncated { needed: usize },
    #[error("{0} trailing bytes after payload")]
    Trailing(usize),
    #[error("invalid field: {0}")]
    Invalid(&'static str),
}

pub struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf }
    }

    fn take<const N: usize>(&mut self) -> Result<[u8; N], WireError> {
        if self.buf.len() < N {
            return Err(WireError::Truncated { needed: N - self.buf.len() });
        }
        let (head, rest) = self.buf.split_at(N);
        self.buf = rest;
        Ok(head.try_into().expect("split length"))
    }

    pub fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take::<1>()?[0])
    }
    pub fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_le_bytes(self.take()?))
    }
    pub fn u64(&mut self) -> Result<u64, WireError> {
        Ok(u64::from_le_bytes(self.take()?))
    }
    pub fn i64(&mut self) -> Result<i64, WireError> {
        Ok(i64::from_le_bytes(self.take()?))
    }
    pub fn f64(&mut self) -> Result<f64, WireError> {
        Ok(f64::from_le_bytes(self.take()?))
    }

    pub fn len_prefix(&mut self, elem_size: usize) -> Result<usize, WireError> {
        let n = self.u32()? as usize;
        if n.saturating_mul(elem_size) > self.buf.len() {
            return Err(WireError::Truncated { needed: n * elem_size - self.buf.len() });
        }
        Ok(n)
    }

    pub fn remaining(&self) -> usize {
        self.buf.len()
    }
}

pub trait Wire: Sized {
    fn encode(&self, out: &mut Vec<u8>);
    fn decode(r: &mut Reader<'_>) -> Result<Self, WireError>;

    fn to_bytes(&self) -> Vec<u8> {
        let mut v = Vec::new();
        self.encode(&mut v);
        v
    }

    /// Decodes a complete payload, rejecting trailing bytes.
    fn from_bytes(bytes: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(bytes);
        let v = Self::decode(&mut r)?;
        match r.remaining() {
            0 => Ok(v),
            n => Err(WireError::Trailing(n)),
        }
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

impl Wire for Pose2D {
    fn encode(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.x.to_le_bytes());
        out.extend_from_slice(&self.y.to_le_bytes());
        out.extend_from_slice(&self.theta.to_le_bytes());
        out.extend_from_slice(&self.utime.to_le_bytes());
    }
    fn decode(r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(Pose2D { x: r.f64()?, y: r.f64()?, theta: r.f64()?, utime: r.u64()? })
    }
}

impl Wire for Twist2D {
    fn encode(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.vx.to_le_bytes());
        out.extend_from_slice(&self.vy.to_le_bytes());
        out.extend_from_slice(&self.wz.to_le_bytes());
        out.extend_from_slice(&self.utime.to_le_bytes());
    }
    fn decode(r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(Twist2D { vx: r.f64()?, vy: r.f64()?, wz: r.f64()?, utime: r.u64()? })
    }
}

impl Wire for LidarScan {
    fn encode(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.utime.to_le_bytes());
        put_u32(out, self.num_ranges);
        put_u32(out, self.ranges.len());
        self.ranges.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
        put_u32(out, self.thetas.len());
        self.thetas.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
    }
    fn decode(r: &mut Reader<'_>) -> Result<Self, WireError> {
        let utime = r.u64()?;
        let num_ranges = r.u32()? as usize;
        let n = r.len_prefix(8)?;
        let ranges = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
        let n = r.len_prefix(8)?;
        let thetas = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
        let scan = LidarScan { utime, ranges, thetas, num_ranges };
        if !scan.is_consistent() {
            return Err(WireError::Invalid("scan array lengths disagree with num_ranges"));
        }
        Ok(scan)
    }
}

impl Wire for OccupancyGrid {
    fn encode(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.origin_x.to_le_bytes());
        out.extend_from_slice(&self.origin_y.to_le_bytes());
        out.extend_from_slice(&self.resolution.to_le_bytes());
        put_u32(out, self.width);
        put_u32(out, self.height);
        out.extend(self.cells.iter().map(|&c| c as u8));
    }
    fn decode(r: &mut Reader<'_>) -> Result<Self, WireError> {
        let origin_x = r.f64()?;
        let origin_y = r.f64()?;
        let resolution = r.f64()?;
        let width = r.u32()? as usize;
        let height = r.u32()? as usize;
        let n = width.checked_mul(height).ok_or(WireError::Invalid("grid size overflows"))?;
        if r.remaining() < n {
            return Err(WireError::Truncated { needed: n - r.remaining() });
        }
        let cells = (0..n).map(|_| r.u8().map(|b| b as i8)).collect::<Result<Vec<_>, _>>()?;
        let g = OccupancyGrid { origin_x, origin_y, resolution, width, height, cells };
        g.validate().map_err(|_| WireError::Invalid("grid metadata"))?;
        Ok(g)
    }
}

impl Wire for Path2D {
    fn encode(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.utime.to_le_bytes());
        put_u32(out, self.poses.len());
        self.poses.iter().for_each(|p| p.encode(out));
    }
    fn decode(r: &mut Reader<'_>) -> Result<Self, WireError> {
        let utime = r.u64()?;
        let n = r.len_prefix(32)?;
        let poses = (0..n).map(|_| Pose2D::decode(r)).collect::<Result<Vec<_>, _>>()?;
        Ok(Path2D { utime, poses })
    }
}

impl Wire for SlamModeCommand {
    fn encode(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.utime.to_le_bytes());
        out.push(self.mode.code());
    }
    fn decode(r: &mut Reader<'_>) -> Result<Self, WireError> {
        let utime = r.u64()?;
        let mode = SlamMode::from_code(r.u8()?).ok_or(WireError::Invalid("slam mode code"))?;
        Ok(SlamModeCommand { utime, mode })
    }
}

impl Wire for ResetRequest {
    fn encode(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.utime.to_le_bytes());
    }
    fn decode(r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(ResetRequest { utime: r.u64()? })
    }
}

impl Wire for EncoderReading {
    fn encode(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.utime.to_le_bytes());
        out.extend_from_slice(&self.delta_time.to_le_bytes());
        put_u32(out, self.ticks.len());
        self.ticks.iter().for_each(|t| out.extend_from_slice(&t.to_le_bytes()));
    }
    fn decode(r: &mut Reader<'_>) -> Result<Self, WireError> {
        let utime = r.u64()?;
        let delta_time = r.u64()?;
        let n = r.len_prefix(8)?;
        let ticks = (0..n).map(|_| r.i64()).collect::<Result<Vec<_>, _>>()?;
        Ok(EncoderReading { utime, ticks, delta_time })
    }
}

impl Wire for WheelCommand {
    fn encode(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.utime.to_le_bytes());
        put_u32(out, self.speeds.len());
        self.speeds.iter().for_each(|s| out.extend_from_slice(&s.to_le_bytes()));
    }
    fn decode(r: &mut Reader<'_>) -> Result<Self, WireError> {
        let utime = r.u64()?;
        let n = r.len_prefix(8)?;
        let speeds = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
        Ok(WheelCommand { utime, speeds })
    }
}

impl Wire for TimeSync {
    fn encode(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.host_utime.to_le_bytes());
        out.extend_from_slice(&self.board_utime.to_le_bytes());
    }
    fn decode(r: &mut Reader<'_>) -> Result<Self, WireError> {
        Ok(TimeSync { host_utime: r.u64()?, board_utime: r.u64()? })
    }
}

#[cfg(test)]
mod tests {
    use proptest::collection::vec;
    use proptest::prelude::*;

    use super::*;

    fn any_f64() -> impl Strategy<Value = f64> {
        // includes NaN payloads and signed zeros: equality is checked on bits
        any::<u64>().prop_map(f64::from_bits)
    }

    fn pose() -> impl Strategy<Value = Pose2D> {
        (any_f64(), any_f64(), any_f64(), any::<u64>()).prop_map(|(x, y, theta, utime)| Pose2D { x, y, theta, utime })
    }

    fn bits<T: Wire>(v: &T) -> Vec<u8> {
        v.to_bytes()
    }

    proptest! {
        #[test]
        fn pose_and_twist_bit_exact(p in pose(), t in (any_f64(), any_f64(), any_f64(), any::<u64>())) {
            prop_assert_eq!(bits(&Pose2D::from_bytes(&p.to_bytes()).unwrap()), p.to_bytes());
            let tw = Twist2D { vx: t.0, vy: t.1, wz: t.2, utime: t.3 };
            prop_assert_eq!(bits(&Twist2D::from_bytes(&tw.to_bytes()).unwrap()), tw.to_bytes());
        }

        #[test]
        fn collections_bit_exact(
            n in 0usize..64,
            seed in vec(any_f64(), 128),
            cells in vec(any::<i8>(), 0..60),
            ticks in vec(any::<i64>(), 0..4),
            poses in vec(pose(), 0..8),
            utime in any::<u64>(),
        ) {
            let scan = LidarScan { utime, ranges: seed[..n].to_vec(), thetas: seed[64..64 + n].to_vec(), num_ranges: n };
            prop_assert_eq!(bits(&LidarScan::from_bytes(&scan.to_bytes()).unwrap()), scan.to_bytes());

            let w = cells.len().max(1);
            let h = usize::from(!cells.is_empty());
            let grid = OccupancyGrid { origin_x: seed[0], origin_y: seed[1], resolution: 0.05, width: w, height: h, cells: if cells.is_empty() { vec![] } else { cells.clone() } };
            if grid.validate().is_ok() {
                prop_assert_eq!(OccupancyGrid::from_bytes(&grid.to_bytes()).unwrap().to_bytes(), grid.to_bytes());
            }

            let enc = EncoderReading { utime, ticks: ticks.clone(), delta_time: utime / 3 };
            prop_assert_eq!(EncoderReading::from_bytes(&enc.to_bytes()).unwrap(), enc);
            let wc = WheelCommand { utime, speeds: seed[..ticks.len()].to_vec() };
            prop_assert_eq!(bits(&WheelCommand::from_bytes(&wc.to_bytes()).unwrap()), wc.to_bytes());
            let path = Path2D { utime, poses };
            prop_assert_eq!(bits(&Path2D::from_bytes(&path.to_bytes()).unwrap()), path.to_bytes());
            for mode in [SlamMode::Idle, SlamMode::LocalizationOnly, SlamMode::FullSlam] {
                let m = SlamModeCommand { utime, mode };
                prop_assert_eq!(SlamModeCommand::from_bytes(&m.to_bytes()).unwrap(), m);
            }
            let rr = ResetRequest { utime };
            prop_assert_eq!(ResetRequest::from_bytes(&rr.to_bytes()).unwrap(), rr);
            let ts = TimeSync { host_utime: utime, board_utime: !utime };
            prop_assert_eq!(TimeSync::from_bytes(&ts.to_bytes()).unwrap(), ts);
        }
    }

    #[test]
    fn rejects_truncated_and_trailing() {
        let p = Pose2D::new(1.0, 2.0, 3.0).to_bytes();
        assert!(matches!(Pose2D::from_bytes(&p[..31]), Err(WireError::Truncated { .. })));
        let mut long = p.clone();
        long.push(0);
        assert_eq!(Pose2D::from_bytes(&long), Err(WireError::Trailing(1)));
        let mut bad_mode = SlamModeCommand::default().to_bytes();
        bad_mode[8] = 9;
        assert!(SlamModeCommand::from_bytes(&bad_mode).is_err());
        // absurd length prefix must not allocate
        let mut bogus = 0u64.to_le_bytes().to_vec();
        bogus.extend_from_slice(&u32::MAX.to_le_bytes());
        assert!(Path2D::from_bytes(&bogus).is_err());
    }
}
