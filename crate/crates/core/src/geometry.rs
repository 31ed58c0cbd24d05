//! Sensor and microlens coordinate systems.
//!
//! Physical positions are SI meters in the microlens back focal plane, with
//! the optical axis at the origin. The aperture lattice is centered on the
//! axis; the sensor ROI is placed by the physical center of its pixel (0,0).
//! The centroid grid ("half-resolution" grid) has cells of half the sensor
//! pixel width, so the midpoint of any two pixel centers lands on a cell
//! center.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Mul, Sub};

use crate::config::{format_um, ConfigDoc};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const ZERO: Point2 = Point2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }
}

/// Integer sensor coordinate; `x` is the column, `y` the row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pixel {
    pub x: usize,
    pub y: usize,
}

impl Pixel {
    pub const fn new(x: usize, y: usize) -> Self {
        Pixel { x, y }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ApertureIndex {
    pub col: usize,
    pub row: usize,
}

impl ApertureIndex {
    pub const fn new(col: usize, row: usize) -> Self {
        ApertureIndex { col, row }
    }
}

impl fmt::Display for ApertureIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.col, self.row)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpticalConfig {
    pub wavelength: f64,
    pub f_sh: f64,
    /// Full microlens width (center-to-center pitch).
    pub aperture_pitch: f64,
    pub sensor_pixel: f64,
    /// ROI extent in sensor pixels, (width, height).
    pub roi_pixels: (usize, usize),
    /// Aperture lattice extent, (cols, rows).
    pub aperture_grid: (usize, usize),
    /// Physical position of the center of ROI pixel (0,0).
    pub roi_origin: Point2,
    /// Physical half-width mapped onto the normalized interval [-1, 1].
    pub rescale_halfwidth: f64,
}

impl Default for OpticalConfig {
    fn default() -> Self {
        let roi_pixels = (165, 165);
        let sensor_pixel = 13e-6;
        OpticalConfig {
            wavelength: 808e-9,
            f_sh: 14.6e-3,
            aperture_pitch: 300e-6,
            sensor_pixel,
            roi_pixels,
            aperture_grid: (7, 7),
            roi_origin: centered_origin(roi_pixels, sensor_pixel),
            rescale_halfwidth: 1.05e-3,
        }
    }
}

/// Origin that puts the ROI center on the optical axis.
pub fn centered_origin(roi_pixels: (usize, usize), sensor_pixel: f64) -> Point2 {
    Point2::new(
        -(roi_pixels.0 as f64 - 1.0) / 2.0 * sensor_pixel,
        -(roi_pixels.1 as f64 - 1.0) / 2.0 * sensor_pixel,
    )
}

// Positions within this many cell widths of a lattice edge snap onto it, so
// that edge positions built by float arithmetic bin deterministically.
const EDGE_SNAP: f64 = 1e-9;

impl OpticalConfig {
    /// Reads the optics keys from a config document; absent keys keep defaults.
    /// When `roi_pixels` or `sensor_pixel` change and no `roi_origin` is given,
    /// the ROI stays centered on the axis.
    pub fn from_doc(doc: &ConfigDoc) -> Result<Self> {
        let mut c = OpticalConfig::default();
        if let Some(v) = doc.length("wavelength")? {
            c.wavelength = v;
        }
        if let Some(v) = doc.length("f_sh")? {
            c.f_sh = v;
        }
        if let Some(v) = doc.length("aperture_pitch")? {
            c.aperture_pitch = v;
        }
        if let Some(v) = doc.length("sensor_pixel")? {
            c.sensor_pixel = v;
        }
        if let Some(v) = doc.usize_pair("roi_pixels")? {
            c.roi_pixels = v;
        }
        if let Some(v) = doc.usize_pair("aperture_grid")? {
            c.aperture_grid = v;
        }
        if let Some(v) = doc.length("rescale_halfwidth")? {
            c.rescale_halfwidth = v;
        }
        c.roi_origin = match doc.length_pair("roi_origin")? {
            Some((x, y)) => Point2::new(x, y),
            None => centered_origin(c.roi_pixels, c.sensor_pixel),
        };
        c.validate()?;
        Ok(c)
    }

    /// Renders the config in the shared key-value format.
    pub fn to_doc_string(&self) -> String {
        format!(
            "wavelength = {}nm\nf_sh = {}mm\naperture_pitch = {}\nsensor_pixel = {}\nroi_pixels = {}x{}\naperture_grid = {}x{}\nroi_origin = {}, {}\nrescale_halfwidth = {}mm\n",
            self.wavelength * 1e9,
            self.f_sh * 1e3,
            format_um(self.aperture_pitch),
            format_um(self.sensor_pixel),
            self.roi_pixels.0,
            self.roi_pixels.1,
            self.aperture_grid.0,
            self.aperture_grid.1,
            format_um(self.roi_origin.x),
            format_um(self.roi_origin.y),
            self.rescale_halfwidth * 1e3,
        )
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("wavelength", self.wavelength),
            ("f_sh", self.f_sh),
            ("aperture_pitch", self.aperture_pitch),
            ("sensor_pixel", self.sensor_pixel),
            ("rescale_halfwidth", self.rescale_halfwidth),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::domain(format!("{name} must be positive, got {v}")));
            }
        }
        let (w, h) = self.roi_pixels;
        let (cols, rows) = self.aperture_grid;
        if w == 0 || h == 0 || cols == 0 || rows == 0 {
            return Err(Error::domain("ROI and aperture grid must be nonempty"));
        }
        if w > u16::MAX as usize || h > u16::MAX as usize {
            return Err(Error::domain("ROI dimensions must fit in 16 bits"));
        }
        let fp_w = cols as f64 * self.aperture_pitch;
        let fp_h = rows as f64 * self.aperture_pitch;
        if fp_w > w as f64 * self.sensor_pixel * (1.0 + 1e-12)
            || fp_h > h as f64 * self.sensor_pixel * (1.0 + 1e-12)
        {
            return Err(Error::domain(format!(
                "aperture grid {}x{} of pitch {} does not fit the {}x{} pixel ROI",
                cols,
                rows,
                format_um(self.aperture_pitch),
                w,
                h
            )));
        }
        Ok(())
    }

    pub fn wave_number(&self) -> f64 {
        2.0 * PI / self.wavelength
    }

    pub fn aperture_count(&self) -> usize {
        self.aperture_grid.0 * self.aperture_grid.1
    }

    /// All apertures in row-major order.
    pub fn apertures(&self) -> impl Iterator<Item = ApertureIndex> {
        let (cols, rows) = self.aperture_grid;
        (0..rows).flat_map(move |row| (0..cols).map(move |col| ApertureIndex::new(col, row)))
    }

    pub fn aperture_linear(&self, a: ApertureIndex) -> usize {
        a.row * self.aperture_grid.0 + a.col
    }

    pub fn half_res_dims(&self) -> (usize, usize) {
        (2 * self.roi_pixels.0, 2 * self.roi_pixels.1)
    }

    pub fn pixel_center(&self, p: Pixel, half_res: bool) -> Result<Point2> {
        let (w, h) = if half_res {
            self.half_res_dims()
        } else {
            self.roi_pixels
        };
        if p.x >= w || p.y >= h {
            return Err(Error::domain(format!(
                "pixel ({},{}) outside {}x{} grid",
                p.x, p.y, w, h
            )));
        }
        let step = if half_res {
            self.sensor_pixel / 2.0
        } else {
            self.sensor_pixel
        };
        Ok(Point2::new(
            self.roi_origin.x + p.x as f64 * step,
            self.roi_origin.y + p.y as f64 * step,
        ))
    }

    /// Center of half-resolution cell `(i, j)`, without bounds checks; cells
    /// outside the ROI are valid lattice positions.
    pub fn half_res_center(&self, i: i64, j: i64) -> Point2 {
        let step = self.sensor_pixel / 2.0;
        Point2::new(
            self.roi_origin.x + i as f64 * step,
            self.roi_origin.y + j as f64 * step,
        )
    }

    /// Nearest half-resolution cell index of a physical position (unbounded).
    pub fn half_res_index(&self, p: Point2) -> (i64, i64) {
        let step = self.sensor_pixel / 2.0;
        (
            ((p.x - self.roi_origin.x) / step).round() as i64,
            ((p.y - self.roi_origin.y) / step).round() as i64,
        )
    }

    /// Full-resolution pixel containing `p`, or `None` outside the ROI.
    pub fn pixel_of(&self, p: Point2) -> Option<Pixel> {
        let fx = ((p.x - self.roi_origin.x) / self.sensor_pixel + 0.5).floor();
        let fy = ((p.y - self.roi_origin.y) / self.sensor_pixel + 0.5).floor();
        if fx < 0.0 || fy < 0.0 {
            return None;
        }
        let (x, y) = (fx as usize, fy as usize);
        (x < self.roi_pixels.0 && y < self.roi_pixels.1).then_some(Pixel::new(x, y))
    }

    /// Lower-left corner of the aperture lattice footprint.
    fn lattice_corner(&self) -> Point2 {
        Point2::new(
            -(self.aperture_grid.0 as f64) * self.aperture_pitch / 2.0,
            -(self.aperture_grid.1 as f64) * self.aperture_pitch / 2.0,
        )
    }

    pub fn footprint_center(&self) -> Point2 {
        Point2::ZERO
    }

    pub fn aperture_center(&self, a: ApertureIndex) -> Result<Point2> {
        self.check_aperture(a)?;
        let corner = self.lattice_corner();
        Ok(Point2::new(
            corner.x + (a.col as f64 + 0.5) * self.aperture_pitch,
            corner.y + (a.row as f64 + 0.5) * self.aperture_pitch,
        ))
    }

    pub fn check_aperture(&self, a: ApertureIndex) -> Result<()> {
        if a.col >= self.aperture_grid.0 || a.row >= self.aperture_grid.1 {
            return Err(Error::domain(format!(
                "aperture {a} outside {}x{} grid",
                self.aperture_grid.0, self.aperture_grid.1
            )));
        }
        Ok(())
    }

    /// Aperture whose half-open cell contains `pos`.
    pub fn aperture_of(&self, pos: Point2) -> Option<ApertureIndex> {
        let corner = self.lattice_corner();
        let col = lattice_bin((pos.x - corner.x) / self.aperture_pitch, self.aperture_grid.0)?;
        let row = lattice_bin((pos.y - corner.y) / self.aperture_pitch, self.aperture_grid.1)?;
        Some(ApertureIndex::new(col, row))
    }

    /// Maps a physical position to the normalized modal domain.
    pub fn to_normalized(&self, pos: Point2) -> Result<Point2> {
        let corner = self.lattice_corner();
        let tol = self.aperture_pitch * EDGE_SNAP;
        if pos.x < corner.x - tol
            || pos.y < corner.y - tol
            || pos.x > -corner.x + tol
            || pos.y > -corner.y + tol
        {
            return Err(Error::domain(format!(
                "position ({:e}, {:e}) m outside the aperture footprint",
                pos.x, pos.y
            )));
        }
        Ok(self.to_normalized_unchecked(pos))
    }

    pub fn to_normalized_unchecked(&self, pos: Point2) -> Point2 {
        let c = self.footprint_center();
        Point2::new(
            (pos.x - c.x) / self.rescale_halfwidth,
            (pos.y - c.y) / self.rescale_halfwidth,
        )
    }

    pub fn from_normalized(&self, p: Point2) -> Point2 {
        self.footprint_center() + p * self.rescale_halfwidth
    }

    /// Converts a physical gradient (rad/m) to rad per normalized unit.
    pub fn gradient_to_normalized(&self, kappa: f64) -> f64 {
        kappa * self.rescale_halfwidth
    }

    /// Aperture half-width in normalized units.
    pub fn normalized_halfwidth(&self) -> f64 {
        self.aperture_pitch / 2.0 / self.rescale_halfwidth
    }

    /// Largest measurable gradient magnitude per axis, k*(pitch/2)/f_sh.
    pub fn kappa_max(&self) -> f64 {
        self.displacement_to_gradient(self.aperture_pitch / 2.0)
    }

    pub fn displacement_to_gradient(&self, d: f64) -> f64 {
        d * self.wave_number() / self.f_sh
    }

    pub fn gradient_to_displacement(&self, kappa: f64) -> f64 {
        kappa * self.f_sh / self.wave_number()
    }

    /// Dynamic-range predicate: both gradient components strictly inside the
    /// bound. Values within the edge-snap tolerance of the bound count as on it.
    pub fn within_dynamic_range(&self, kx: f64, ky: f64) -> bool {
        let m = self.kappa_max() * (1.0 - EDGE_SNAP);
        kx.abs() < m && ky.abs() < m
    }

    /// Half-open index range of half-resolution cells whose centers fall in
    /// aperture `a`, per axis: `(x_range, y_range)`. Ranges may extend past
    /// the ROI when the lattice does.
    pub fn aperture_cells(&self, a: ApertureIndex) -> Result<(std::ops::Range<i64>, std::ops::Range<i64>)> {
        let c = self.aperture_center(a)?;
        let half = self.aperture_pitch / 2.0;
        let step = self.sensor_pixel / 2.0;
        let range = |lo: f64, hi: f64, origin: f64| {
            // first index with center >= lo, first index with center >= hi
            let first = ceil_snapped((lo - origin) / step);
            let end = ceil_snapped((hi - origin) / step);
            first..end
        };
        Ok((
            range(c.x - half, c.x + half, self.roi_origin.x),
            range(c.y - half, c.y + half, self.roi_origin.y),
        ))
    }
}

fn ceil_snapped(u: f64) -> i64 {
    let r = u.round();
    if (u - r).abs() < EDGE_SNAP {
        r as i64
    } else {
        u.ceil() as i64
    }
}

fn lattice_bin(u: f64, n: usize) -> Option<usize> {
    let r = u.round();
    let u = if (u - r).abs() < EDGE_SNAP { r } else { u };
    let f = u.floor();
    (f >= 0.0 && (f as usize) < n).then_some(f as usize)
}
