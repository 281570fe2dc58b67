//! Map conversion between the native text format and binary PGM images.
//!
//! PGM pixels are `127 - log_odds`, so occupied cells are dark and free cells
//! light, and the mapping is lossless. Origin and resolution travel in a
//! `# mbot origin_x origin_y resolution` comment; image row 0 is the top
//! (largest y) row of the map.

use std::path::Path;

use mbot_core::grid::{GridError, GridGeometry};
use mbot_core::OccupancyGrid;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MapFileError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("not a binary PGM: {0}")]
    Pgm(String),
    #[error("unsupported map extension `{0}` (use .map or .pgm)")]
    Extension(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapFormat {
    Text,
    Pgm,
}

impl MapFormat {
    pub fn from_path(path: &Path) -> Result<Self, MapFileError> {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("map") => Ok(MapFormat::Text),
            Some("pgm") => Ok(MapFormat::Pgm),
            other => Err(MapFileError::Extension(other.unwrap_or("").to_string())),
        }
    }
}

pub fn to_pgm(map: &OccupancyGrid) -> Vec<u8> {
    let mut out = format!(
        "P5\n# mbot {} {} {}\n{} {}\n255\n",
        map.origin_x, map.origin_y, map.resolution, map.width, map.height
    )
    .into_bytes();
    for row in map.cells.chunks(map.width.max(1)).rev() {
        out.extend(row.iter().map(|&v| (127 - v as i16) as u8));
    }
    out
}

pub fn from_pgm(bytes: &[u8]) -> Result<OccupancyGrid, MapFileError> {
    let bad = |m: &str| MapFileError::Pgm(m.to_string());
    let mut pos = 0;
    let mut tokens: Vec<String> = Vec::new();
    let mut meta: Option<(f64, f64, f64)> = None;
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos >= bytes.len() {
            return Err(bad("truncated header"));
        }
        if bytes[pos] == b'#' {
            let end = bytes[pos..].iter().position(|&b| b == b'\n').map_or(bytes.len(), |i| pos + i);
            let comment = String::from_utf8_lossy(&bytes[pos + 1..end]);
            let f: Vec<&str> = comment.split_whitespace().collect();
            if f.len() == 4 && f[0] == "mbot" {
                let p = |s: &str| s.parse::<f64>().map_err(|_| bad("bad mbot metadata comment"));
                meta = Some((p(f[1])?, p(f[2])?, p(f[3])?));
            }
            pos = end;
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if tokens[0] != "P5" {
        return Err(bad("missing P5 magic"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad("bad header number"));
    let (width, height, maxval) = (num(&tokens[1])?, num(&tokens[2])?, num(&tokens[3])?);
    if maxval != 255 {
        return Err(bad("only 8-bit images are supported"));
    }
    pos += 1;
    let data = bytes.get(pos..pos + width * height).ok_or_else(|| bad("truncated pixel data"))?;
    let (ox, oy, res) = meta.unwrap_or((0.0, 0.0, 0.05));
    let geometry = GridGeometry::new(ox, oy, res, width, height)?;
    let mut cells = Vec::with_capacity(width * height);
    for row in data.chunks(width.max(1)).rev() {
        cells.extend(row.iter().map(|&p| (127 - p as i16) as i8));
    }
    Ok(OccupancyGrid::from_cells(geometry, cells)?)
}

pub fn load(path: &Path) -> Result<OccupancyGrid, MapFileError> {
    match MapFormat::from_path(path)? {
        MapFormat::Text => Ok(OccupancyGrid::load(path)?),
        MapFormat::Pgm => from_pgm(&std::fs::read(path)?),
    }
}

pub fn save(map: &OccupancyGrid, path: &Path) -> Result<(), MapFileError> {
    match MapFormat::from_path(path)? {
        MapFormat::Text => Ok(map.save(path)?),
        MapFormat::Pgm => Ok(std::fs::write(path, to_pgm(map))?),
    }
}

#[cfg(test)]
mod tests {
    use mbot_core::world::{add_box, walled_room};

    use super::*;

    #[test]
    fn pgm_round_trip_is_lossless() {
        let mut g = walled_room(1.0, 0.1);
        add_box(&mut g, 0.3, 0.3, 0.4, 0.6);
        g.cells[13] = -128;
        g.cells[14] = -7;
        let back = from_pgm(&to_pgm(&g)).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn top_row_of_image_is_highest_y() {
        let mut g = OccupancyGrid::new(0.0, 0.0, 1.0, 2, 2).unwrap();
        g.cells = vec![127, 127, -128, -128];
        let pgm = to_pgm(&g);
        let pixels = &pgm[pgm.len() - 4..];
        assert_eq!(pixels, &[255, 255, 0, 0]);
    }
}
