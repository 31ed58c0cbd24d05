//! Dense 2D maps and the portable grid file.
//!
//! Grid file layout (little-endian): magic "PCBG", version u16 (1), width u16,
//! height u16, value type u8 (1 = IEEE-754 binary64), 5 reserved bytes, then
//! `width * height` values row-major. A text sidecar `<file>.meta` carries
//! `key = value` lines with axis units and provenance.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const GRID_MAGIC: &[u8; 4] = b"PCBG";
pub const GRID_VERSION: u16 = 1;
pub const GRID_VALUE_F64: u8 = 1;
pub const GRID_HEADER_LEN: usize = 16;


/// Dense row-major 2D array of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl Grid {
    pub fn zeros(width: usize, height: usize) -> Self {
        Grid {
            width,
            height,
            values: vec![0.0; width * height],
        }
    }

    pub fn from_values(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::domain(format!(
                "{}x{} grid needs {} values, got {}",
                width,
                height,
                width * height,
                values.len()
            )));
        }
        Ok(Grid {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    /// Value at signed coordinates, `None` outside the grid.
    #[inline]
    pub fn get_i(&self, x: i64, y: i64) -> Option<f64> {
        (x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height)
            .then(|| self.values[y as usize * self.width + x as usize])
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.values[y * self.width + x] = v;
    }

    #[inline]
    pub fn add(&mut self, x: usize, y: usize, v: f64) {
        self.values[y * self.width + x] += v;
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Grid {
        Grid {
            width: self.width,
            height: self.height,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Position of the largest value (first in row-major order on ties).
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        (best % self.width, best / self.width)
    }
}

/// Pearson correlation between two equally sized value sets, restricted to
/// positions where `include` is true.
pub fn normalized_cross_correlation(a: &Grid, b: &Grid, include: impl Fn(usize, usize) -> bool) -> Result<f64> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::domain("grid size mismatch"));
    }
    let mut pairs = Vec::new();
    for y in 0..a.height {
        for x in 0..a.width {
            if include(x, y) {
                pairs.push((a.get(x, y), b.get(x, y)));
            }
        }
    }
    if pairs.len() < 2 {
        return Err(Error::domain("too few samples for correlation"));
    }
    let n = pairs.len() as f64;
    let ma = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let mb = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in pairs {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Ok(0.0);
    }
    Ok(sab / (saa * sbb).sqrt())
}

pub fn encode_grid(grid: &Grid) -> Result<Vec<u8>> {
    if grid.width > u16::MAX as usize || grid.height > u16::MAX as usize {
        return Err(Error::domain("grid dimensions exceed 16 bits"));
    }
    let mut out = Vec::with_capacity(GRID_HEADER_LEN + 8 * grid.values.len());
    out.extend_from_slice(GRID_MAGIC);
    out.extend_from_slice(&GRID_VERSION.to_le_bytes());
    out.extend_from_slice(&(grid.width as u16).to_le_bytes());
    out.extend_from_slice(&(grid.height as u16).to_le_bytes());
    out.push(GRID_VALUE_F64);
    out.extend_from_slice(&[0u8; 5]);
    for v in &grid.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_grid(bytes: &[u8], path: &Path) -> Result<Grid> {
    let fmt = |offset: u64, message: String| Error::Format {
        path: path.to_path_buf(),
        offset,
        message,
    };
    if bytes.len() < GRID_HEADER_LEN {
        return Err(fmt(0, "shorter than the 16-byte grid header".into()));
    }
    if &bytes[0..4] != GRID_MAGIC {
        return Err(fmt(0, "bad magic, expected \"PCBG\"".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != GRID_VERSION {
        return Err(fmt(4, format!("unsupported version {version}")));
    }
    let width = u16::from_le_bytes([bytes[6], bytes[7]]) as usize;
    let height = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    if bytes[10] != GRID_VALUE_F64 {
        return Err(fmt(10, format!("unsupported value type {}", bytes[10])));
    }
    let expected = GRID_HEADER_LEN + 8 * width * height;
    if bytes.len() != expected {
        return Err(fmt(
            bytes.len().min(expected) as u64,
            format!("length {} does not match {width}x{height} grid ({expected})", bytes.len()),
        ));
    }
    let values = bytes[GRID_HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Grid::from_values(width, height, values)
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

/// Writes the grid and its metadata sidecar.
pub fn write_grid(path: &Path, grid: &Grid, meta: &[(&str, String)]) -> Result<()> {
    std::fs::write(path, encode_grid(grid)?).map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    let mut text = String::new();
    for (k, v) in meta {
        text.push_str(&format!("{k} = {v}\n"));
    }
    let side = sidecar_path(path);
    std::fs::write(&side, text).map_err(|e| Error::io(format!("writing {}", side.display()), e))
}

pub fn read_grid(path: &Path) -> Result<Grid> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    decode_grid(&bytes, path)
}
