//! Occupancy grids: cell addressing, the ASCII map file format, ray traversal
//! and line rasterization.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Pose2;
use crate::scalar::Scalar;

/// Log-odds value of a cell never observed.
pub const UNKNOWN: i8 = 0;
/// Cells strictly above this log-odds are treated as solid.
pub const DEFAULT_OCCUPIED_THRESHOLD: i8 = 64;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("resolution must be positive and finite, got {0}")]
    BadResolution(f64),
    #[error("grid is {width}x{height} but holds {len} cells")]
    SizeMismatch { width: usize, height: usize, len: usize },
    #[error("cell ({col}, {row}) outside {width}x{height} grid")]
    OutOfBounds { col: i64, row: i64, width: usize, height: usize },
    #[error("map file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("map file io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub col: usize,
    pub row: usize,
}

impl Cell {
    pub const fn new(col: usize, row: usize) -> Self {
        Self { col, row }
    }
}

/// Placement of a grid in the world: corner of cell (0,0), cell size and extent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridGeometry<T> {
    pub origin_x: T,
    pub origin_y: T,
    pub resolution: T,
    pub width: usize,
    pub height: usize,
}

impl<T: Scalar> GridGeometry<T> {
    pub fn new(origin_x: T, origin_y: T, resolution: T, width: usize, height: usize) -> Result<Self, GridError> {
        if !(resolution > T::zero() && resolution.is_finite()) {
            return Err(GridError::BadResolution(resolution.to_f64_lossy()));
        }
        Ok(Self { origin_x, origin_y, resolution, width, height })
    }

    /// Floor-divided cell coordinates, possibly outside the grid.
    #[inline]
    pub fn world_to_cell_unbounded(&self, x: T, y: T) -> (i64, i64) {
        let c = ((x - self.origin_x) / self.resolution).floor();
        let r = ((y - self.origin_y) / self.resolution).floor();
        (c.to_i64().unwrap_or(i64::MIN), r.to_i64().unwrap_or(i64::MIN))
    }

    /// Cell containing `(x, y)`, or `None` when the point lies outside the grid.
    pub fn world_to_cell(&self, x: T, y: T) -> Option<Cell> {
        let (c, r) = self.world_to_cell_unbounded(x, y);
        self.cell_checked(c, r)
    }

    #[inline]
    pub fn contains(&self, col: i64, row: i64) -> bool {
        col >= 0 && row >= 0 && (col as u64) < self.width as u64 && (row as u64) < self.height as u64
    }

    #[inline]
    pub fn cell_checked(&self, col: i64, row: i64) -> Option<Cell> {
        self.contains(col, row).then(|| Cell::new(col as usize, row as usize))
    }

    /// World coordinates of the center of `cell`.
    pub fn cell_to_world(&self, cell: Cell) -> Result<(T, T), GridError> {
        if cell.col >= self.width || cell.row >= self.height {
            return Err(GridError::OutOfBounds {
                col: cell.col as i64,
                row: cell.row as i64,
                width: self.width,
                height: self.height,
            });
        }
        Ok(self.cell_center(cell))
    }

    #[inline]
    pub(crate) fn cell_center(&self, cell: Cell) -> (T, T) {
        let half = T::lit(0.5);
        (
            self.origin_x + (T::lit(cell.col as f64) + half) * self.resolution,
            self.origin_y + (T::lit(cell.row as f64) + half) * self.resolution,
        )
    }

    #[inline]
    pub fn index(&self, cell: Cell) -> usize {
        cell.row * self.width + cell.col
    }

    #[inline]
    pub fn cell_of_index(&self, idx: usize) -> Cell {
        Cell::new(idx % self.width, idx / self.width)
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Row-major grid of signed 8-bit log-odds: -128 certainly free, +127 certainly occupied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogOddsGrid<T> {
    pub origin_x: T,
    pub origin_y: T,
    pub resolution: T,
    pub width: usize,
    pub height: usize,
    pub cells: Vec<i8>,
}

impl<T: Scalar> LogOddsGrid<T> {
    /// All-unknown grid.
    pub fn new(origin_x: T, origin_y: T, resolution: T, width: usize, height: usize) -> Result<Self, GridError> {
        GridGeometry::new(origin_x, origin_y, resolution, width, height)?;
        Ok(Self { origin_x, origin_y, resolution, width, height, cells: vec![UNKNOWN; width * height] })
    }

    pub fn from_cells(geometry: GridGeometry<T>, cells: Vec<i8>) -> Result<Self, GridError> {
        let g = Self {
            origin_x: geometry.origin_x,
            origin_y: geometry.origin_y,
            resolution: geometry.resolution,
            width: geometry.width,
            height: geometry.height,
            cells,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), GridError> {
        GridGeometry::new(self.origin_x, self.origin_y, self.resolution, self.width, self.height)?;
        if self.width.checked_mul(self.height) != Some(self.cells.len()) {
            return Err(GridError::SizeMismatch { width: self.width, height: self.height, len: self.cells.len() });
        }
        Ok(())
    }

    #[inline]
    pub fn geometry(&self) -> GridGeometry<T> {
        GridGeometry {
            origin_x: self.origin_x,
            origin_y: self.origin_y,
            resolution: self.resolution,
            width: self.width,
            height: self.height,
        }
    }

    #[inline]
    pub fn get(&self, cell: Cell) -> i8 {
        self.cells[cell.row * self.width + cell.col]
    }

    #[inline]
    pub fn get_signed(&self, col: i64, row: i64) -> Option<i8> {
        self.geometry().contains(col, row).then(|| self.cells[row as usize * self.width + col as usize])
    }

    #[inline]
    pub fn set(&mut self, cell: Cell, v: i8) {
        let w = self.width;
        self.cells[cell.row * w + cell.col] = v;
    }

    pub fn world_to_cell(&self, x: T, y: T) -> Option<Cell> {
        self.geometry().world_to_cell(x, y)
    }

    pub fn cell_to_world(&self, cell: Cell) -> Result<(T, T), GridError> {
        self.geometry().cell_to_world(cell)
    }

    /// True when no cell has been observed.
    pub fn is_blank(&self) -> bool {
        self.cells.iter().all(|&c| c == UNKNOWN)
    }

    pub fn clear(&mut self) {
        self.cells.fill(UNKNOWN);
    }

    pub fn is_solid_at(&self, col: i64, row: i64, threshold: i8) -> bool {
        self.get_signed(col, row).is_some_and(|v| v > threshold)
    }

    /// Distance along the ray from `(x, y)` at world angle `angle` to the first
    /// solid cell boundary, or `max_range` when nothing solid is crossed first.
    ///
    /// Cells are visited with an exact grid traversal, so thin walls are never
    /// skipped. A ray starting inside a solid cell returns zero. Leaving the grid
    /// counts as a miss.
    pub fn raycast(&self, x: T, y: T, angle: T, max_range: T, threshold: i8) -> T {
        let geom = self.geometry();
        let (mut col, mut row) = geom.world_to_cell_unbounded(x, y);
        if !geom.contains(col, row) {
            return max_range;
        }
        if self.is_solid_at(col, row, threshold) {
            return T::zero();
        }
        let (dy, dx) = angle.sin_cos();
        let res = self.resolution;
        let fx = (x - self.origin_x) / res;
        let fy = (y - self.origin_y) / res;
        let inf = T::infinity();

        let (step_c, mut t_max_x, t_delta_x) = axis_setup(dx, fx, col, res, inf);
        let (step_r, mut t_max_y, t_delta_y) = axis_setup(dy, fy, row, res, inf);

        loop {
            let t;
            if t_max_x < t_max_y {
                t = t_max_x;
                col += step_c;
                t_max_x = t_max_x + t_delta_x;
            } else {
                t = t_max_y;
                row += step_r;
                t_max_y = t_max_y + t_delta_y;
            }
            if t >= max_range || !t.is_finite() {
                return max_range;
            }
            match self.get_signed(col, row) {
                None => return max_range,
                Some(v) if v > threshold => return t,
                Some(_) => {}
            }
        }
    }

    /// Parses the ASCII map format: a header line
    /// `origin_x origin_y width height resolution`, then `height` rows of
    /// `width` integers in `[-128, 127]`, row 0 first.
    pub fn parse_map(text: &str) -> Result<Self, GridError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (hline, header) = lines.next().ok_or(GridError::Parse { line: 1, msg: "empty map file".into() })?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(GridError::Parse { line: hline + 1, msg: format!("expected 5 header fields, found {}", fields.len()) });
        }
        let perr = |what: &str, v: &str| GridError::Parse { line: hline + 1, msg: format!("bad {what} `{v}`") };
        let origin_x: T = fields[0].parse().map_err(|_| perr("origin_x", fields[0]))?;
        let origin_y: T = fields[1].parse().map_err(|_| perr("origin_y", fields[1]))?;
        let width: usize = fields[2].parse().map_err(|_| perr("width", fields[2]))?;
        let height: usize = fields[3].parse().map_err(|_| perr("height", fields[3]))?;
        let resolution: T = fields[4].parse().map_err(|_| perr("resolution", fields[4]))?;
        GridGeometry::new(origin_x, origin_y, resolution, width, height)?;

        let mut cells = Vec::with_capacity(width * height);
        for row in 0..height {
            let (ln, line) = lines.next().ok_or(GridError::Parse {
                line: hline + row + 2,
                msg: format!("expected {height} rows, found {row}"),
            })?;
            let before = cells.len();
            for tok in line.split_whitespace() {
                let v: i8 = tok.parse().map_err(|_| GridError::Parse {
                    line: ln + 1,
                    msg: format!("cell value `{tok}` not an integer in [-128, 127]"),
                })?;
                cells.push(v);
            }
            if cells.len() - before != width {
                return Err(GridError::Parse {
                    line: ln + 1,
                    msg: format!("expected {width} cells, found {}", cells.len() - before),
                });
            }
        }
        if let Some((ln, _)) = lines.next() {
            return Err(GridError::Parse { line: ln + 1, msg: "trailing data after last row".into() });
        }
        Ok(Self { origin_x, origin_y, resolution, width, height, cells })
    }

    pub fn to_map_string(&self) -> String {
        let mut out = String::with_capacity(self.cells.len() * 4 + 64);
        let _ = writeln!(out, "{} {} {} {} {}", self.origin_x, self.origin_y, self.width, self.height, self.resolution);
        for row in self.cells.chunks(self.width.max(1)) {
            let mut first = true;
            for v in row {
                if !first {
                    out.push(' ');
                }
                first = false;
                let _ = write!(out, "{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GridError> {
        Self::parse_map(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), GridError> {
        std::fs::write(path, self.to_map_string())?;
        Ok(())
    }

    /// True when `pose` lies in the grid and not inside a solid cell.
    pub fn is_free_pose(&self, pose: &Pose2<T>, threshold: i8) -> bool {
        let (c, r) = self.geometry().world_to_cell_unbounded(pose.x, pose.y);
        self.get_signed(c, r).is_some_and(|v| v <= threshold)
    }
}

#[inline]
fn axis_setup<T: Scalar>(d: T, f: T, cell: i64, res: T, inf: T) -> (i64, T, T) {
    let eps = T::lit(1e-12);
    if d > eps {
        let next = T::lit((cell + 1) as f64);
        (1, (next - f) * res / d, res / d)
    } else if d < -eps {
        let here = T::lit(cell as f64);
        (-1, (f - here) * res / -d, res / -d)
    } else {
        (0, inf, inf)
    }
}

/// Integer line from `a` to `b`, both endpoints included.
pub fn bresenham(a: (i64, i64), b: (i64, i64)) -> Vec<(i64, i64)> {
    let mut out = Vec::new();
    bresenham_for_each(a, b, |c, r| out.push((c, r)));
    out
}

pub fn bresenham_for_each(a: (i64, i64), b: (i64, i64), mut f: impl FnMut(i64, i64)) {
    let (mut x, mut y) = a;
    let dx = (b.0 - x).abs();
    let dy = -(b.1 - y).abs();
    let sx = if x < b.0 { 1 } else { -1 };
    let sy = if y < b.1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        f(x, y);
        if x == b.0 && y == b.1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn geom(res: f64, w: usize, h: usize) -> GridGeometry<f64> {
        GridGeometry::new(0.0, 0.0, res, w, h).unwrap()
    }

    #[test]
    fn world_to_cell_examples() {
        let g = geom(0.05, 10, 10);
        assert_eq!(g.world_to_cell(0.0, 0.0), Some(Cell::new(0, 0)));
        // floor(0.26 / 0.05) = 5, floor(0.05 / 0.05) = 1
        assert_eq!(g.world_to_cell(0.26, 0.05), Some(Cell::new(5, 1)));
        assert_eq!(g.world_to_cell(-0.01, 0.0), None);
        assert_eq!(g.world_to_cell(0.5, 0.0), None);
    }

    #[test]
    fn cell_to_world_examples() {
        let g = geom(0.05, 10, 10);
        let (x, y) = g.cell_to_world(Cell::new(0, 0)).unwrap();
        assert!((x - 0.025).abs() < 1e-12 && (y - 0.025).abs() < 1e-12);
        let g2 = GridGeometry::new(-5.0, -5.0, 1.0, 10, 10).unwrap();
        assert_eq!(g2.cell_to_world(Cell::new(5, 5)).unwrap(), (0.5, 0.5));
        assert!(g2.cell_to_world(Cell::new(10, 0)).is_err());
    }

    #[test]
    fn generic_over_f32() {
        let g = GridGeometry::<f32>::new(0.0, 0.0, 0.05, 10, 10).unwrap();
        assert_eq!(g.world_to_cell(0.26, 0.07), Some(Cell::new(5, 1)));
        assert!(GridGeometry::<f32>::new(0.0, 0.0, 0.0, 1, 1).is_err());
    }

    #[test]
    fn bresenham_horizontal() {
        assert_eq!(bresenham((0, 0), (3, 0)), vec![(0, 0), (1, 0), (2, 0), (3, 0)]);
        assert_eq!(bresenham((2, 2), (2, 2)), vec![(2, 2)]);
        assert_eq!(bresenham((0, 0), (-2, 2)), vec![(0, 0), (-1, 1), (-2, 2)]);
    }

    #[test]
    fn map_file_round_trip() {
        let mut g = LogOddsGrid::<f64>::new(-1.25, 3.0e-3, 0.05, 3, 2).unwrap();
        g.cells = vec![-128, 0, 127, 5, -7, 64];
        let text = g.to_map_string();
        assert_eq!(text, "-1.25 0.003 3 2 0.05\n-128 0 127\n5 -7 64\n");
        let back = LogOddsGrid::<f64>::parse_map(&text).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.to_map_string(), text);
    }

    #[test]
    fn map_file_rejects_malformed() {
        assert!(LogOddsGrid::<f64>::parse_map("").is_err());
        assert!(LogOddsGrid::<f64>::parse_map("0 0 2 1 0.1\n1\n").is_err());
        assert!(LogOddsGrid::<f64>::parse_map("0 0 2 1 0.1\n1 200\n").is_err());
        assert!(LogOddsGrid::<f64>::parse_map("0 0 1 1 0\n1\n").is_err());
        assert!(LogOddsGrid::<f64>::parse_map("0 0 1 1 0.1\n1\n2\n").is_err());
    }

    fn walled_room() -> LogOddsGrid<f64> {
        // 10 m interior with a one-cell border outside [0, 10]
        let res = 0.05;
        let n = 202;
        let mut g = LogOddsGrid::new(-res, -res, res, n, n).unwrap();
        for i in 0..n {
            g.set(Cell::new(i, 0), 127);
            g.set(Cell::new(i, n - 1), 127);
            g.set(Cell::new(0, i), 127);
            g.set(Cell::new(n - 1, i), 127);
        }
        g
    }

    #[test]
    fn raycast_axis_and_diagonal() {
        let g = walled_room();
        let r = g.raycast(5.0, 5.0, 0.0, 12.0, 64);
        assert!((r - 5.0).abs() <= 0.05, "{r}");
        let d = g.raycast(5.0, 5.0, std::f64::consts::FRAC_PI_4, 12.0, 64);
        assert!((d - 5.0 * 2f64.sqrt()).abs() <= 0.05 * 2f64.sqrt(), "{d}");
        let open = LogOddsGrid::<f64>::new(0.0, 0.0, 0.1, 300, 300).unwrap();
        assert_eq!(open.raycast(15.0, 15.0, 0.3, 12.0, 64), 12.0);
    }

    #[test]
    fn raycast_from_solid_is_zero() {
        let g = walled_room();
        assert_eq!(g.raycast(-0.02, 5.0, 0.0, 12.0, 64), 0.0);
    }

    proptest! {
        #[test]
        fn cell_round_trip(x in 0.0..9.99_f64, y in 0.0..9.99_f64) {
            let g = GridGeometry::new(0.0, 0.0, 0.05, 200, 200).unwrap();
            let c = g.world_to_cell(x, y).unwrap();
            let (cx, cy) = g.cell_to_world(c).unwrap();
            prop_assert_eq!(g.world_to_cell(cx, cy), Some(c));
        }

        #[test]
        fn raycast_reflection_symmetry(x in 1.0..9.0_f64, y in 1.0..9.0_f64, a in -3.1..3.1_f64) {
            // reflecting pose and ray across x = 5 in the symmetric room leaves the range unchanged
            let g = walled_room();
            let r1 = g.raycast(x, y, a, 12.0, 64);
            let r2 = g.raycast(10.0 - x, y, std::f64::consts::PI - a, 12.0, 64);
            prop_assert!((r1 - r2).abs() < 1e-6 + 0.05, "{} vs {}", r1, r2);
        }
    }
}
