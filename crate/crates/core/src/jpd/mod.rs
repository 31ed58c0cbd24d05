//! Coincidence statistics over binary frames and the maps derived from them.
//!
//! Pair counts are kept for every unordered pixel pair within a square window
//! of half-width `W` pixels. Each pixel stores the counts of its partners in
//! the forward half-window: same row with `1 ≤ dx ≤ W`, then rows
//! `1 ≤ dy ≤ W` with `-W ≤ dx ≤ W`.

mod accumulate;
mod checkpoint;
mod maps;

pub use accumulate::{accumulate, Accumulator, Strategy};
pub use checkpoint::{read_stats, write_stats, STATS_MAGIC, STATS_VERSION};
pub use maps::{
    anticorr_map, centroid_marginal, covariance, cpd, difference_marginal, direct_image, remove_background,
    smear_interpolate, CentroidMap, DifferenceMap, SmearRule,
};

use crate::error::{Error, Result};
use crate::geometry::Pixel;

/// Largest window half-width `W` with `W·sensor_pixel ≤ truncation`.
pub fn window_pixels(truncation: f64, sensor_pixel: f64) -> usize {
    let ratio = truncation / sensor_pixel;
    let r = ratio.round();
    if (ratio - r).abs() < 1e-9 {
        r as usize
    } else {
        ratio.floor() as usize
    }
}

/// Number of forward half-window offsets for window `w`.
pub fn half_window_len(w: usize) -> usize {
    w + w * (2 * w + 1)
}

/// Slot of offset `(dx, dy)` in the forward half-window, if it is one.
#[inline]
pub fn offset_slot(w: usize, dx: i64, dy: i64) -> Option<usize> {
    let wi = w as i64;
    if dy == 0 && (1..=wi).contains(&dx) {
        Some((dx - 1) as usize)
    } else if (1..=wi).contains(&dy) && (-wi..=wi).contains(&dx) {
        Some(w + (dy as usize - 1) * (2 * w + 1) + (dx + wi) as usize)
    } else {
        None
    }
}

/// Inverse of [`offset_slot`].
pub fn slot_offset(w: usize, k: usize) -> (i64, i64) {
    if k < w {
        (k as i64 + 1, 0)
    } else {
        let r = k - w;
        let row = 2 * w + 1;
        ((r % row) as i64 - w as i64, (r / row) as i64 + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AccumulateOptions {
    pub window: usize,
    /// Anti-correlation center in doubled pixel coordinates; enables the
    /// `(p, reflect(p))` counters.
    pub symmetry_center2: Option<(i64, i64)>,
    /// Enables per-pixel coincidence counts with this pixel.
    pub postselect: Option<Pixel>,
    pub strategy: Strategy,
}

impl AccumulateOptions {
    pub fn with_window(window: usize) -> Self {
        AccumulateOptions {
            window,
            symmetry_center2: None,
            postselect: None,
            strategy: Strategy::Auto,
        }
    }
}

/// Exact integer statistics of a frame set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoincidenceStats {
    pub(crate) width: usize,
    pub(crate) height: usize,
    pub(crate) window: usize,
    pub(crate) n_frames: u64,
    pub(crate) singles: Vec<u64>,
    /// `pixel * half_window_len + slot`.
    pub(crate) pairs: Vec<u64>,
    pub(crate) anticorr: Option<AntiCorrCounts>,
    pub(crate) postselect: Option<PostselectCounts>,
}

/// Counts of `(p, reflect(p) + (0, dy))` for `dy` in -1, 0, 1, stored as
/// `pixel * 3 + (dy + 1)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AntiCorrCounts {
    pub center2: (i64, i64),
    pub counts: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PostselectCounts {
    pub pixel: Pixel,
    pub counts: Vec<u64>,
}

impl CoincidenceStats {
    pub fn new(width: usize, height: usize, opts: &AccumulateOptions) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::domain("statistics need a nonempty ROI"));
        }
        if opts.window == 0 {
            return Err(Error::domain("pair window must be at least one pixel"));
        }
        if let Some(p) = opts.postselect {
            if p.x >= width || p.y >= height {
                return Err(Error::domain(format!("postselection pixel ({},{}) outside the ROI", p.x, p.y)));
            }
        }
        let n = width * height;
        Ok(CoincidenceStats {
            width,
            height,
            window: opts.window,
            n_frames: 0,
            singles: vec![0; n],
            pairs: vec![0; n * half_window_len(opts.window)],
            anticorr: opts.symmetry_center2.map(|center2| AntiCorrCounts {
                center2,
                counts: vec![0; 3 * n],
            }),
            postselect: opts.postselect.map(|pixel| PostselectCounts {
                pixel,
                counts: vec![0; n],
            }),
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn n_frames(&self) -> u64 {
        self.n_frames
    }

    pub fn singles(&self) -> &[u64] {
        &self.singles
    }

    pub fn single(&self, p: Pixel) -> u64 {
        self.singles[p.y * self.width + p.x]
    }

    pub fn anticorr_counts(&self) -> Option<&AntiCorrCounts> {
        self.anticorr.as_ref()
    }

    pub fn postselect_counts(&self) -> Option<&PostselectCounts> {
        self.postselect.as_ref()
    }

    pub(crate) fn contains(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height
    }

    /// Coincidence count of an unordered pixel pair; `None` when the pair is
    /// a single pixel or lies outside the window.
    pub fn pair_count(&self, a: Pixel, b: Pixel) -> Option<u64> {
        let (ia, ib) = (a.y * self.width + a.x, b.y * self.width + b.x);
        let (lo, hi) = if ia < ib { (a, b) } else { (b, a) };
        let slot = offset_slot(self.window, hi.x as i64 - lo.x as i64, hi.y as i64 - lo.y as i64)?;
        Some(self.pairs[(lo.y * self.width + lo.x) * half_window_len(self.window) + slot])
    }

    /// Component-wise addition of another frame set's statistics.
    pub fn merge(&mut self, other: &CoincidenceStats) -> Result<()> {
        if (self.width, self.height, self.window) != (other.width, other.height, other.window) {
            return Err(Error::domain("cannot merge statistics with different ROI or window"));
        }
        let same_anticorr = match (&self.anticorr, &other.anticorr) {
            (None, None) => true,
            (Some(a), Some(b)) => a.center2 == b.center2,
            _ => false,
        };
        let same_post = match (&self.postselect, &other.postselect) {
            (None, None) => true,
            (Some(a), Some(b)) => a.pixel == b.pixel,
            _ => false,
        };
        if !same_anticorr || !same_post {
            return Err(Error::domain("cannot merge statistics with different optional counters"));
        }
        self.n_frames += other.n_frames;
        add_into(&mut self.singles, &other.singles);
        add_into(&mut self.pairs, &other.pairs);
        if let (Some(a), Some(b)) = (&mut self.anticorr, &other.anticorr) {
            add_into(&mut a.counts, &b.counts);
        }
        if let (Some(a), Some(b)) = (&mut self.postselect, &other.postselect) {
            add_into(&mut a.counts, &b.counts);
        }
        Ok(())
    }
}

fn add_into(a: &mut [u64], b: &[u64]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
}
