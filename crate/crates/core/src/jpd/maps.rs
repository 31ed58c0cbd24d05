use super::{half_window_len, slot_offset, CoincidenceStats};
use crate::error::{Error, Result};
use crate::geometry::Pixel;
use crate::grid::Grid;

/// When a same-row pair covariance is replaced by the mean of its two
/// neighbor-row covariances.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmearRule {
    Off,
    /// Same-row pairs with `|x1 - x2| ≤ limit`.
    Limit(usize),
    AllSameRow,
}

impl Default for SmearRule {
    fn default() -> Self {
        SmearRule::Limit(10)
    }
}

impl SmearRule {
    fn applies(self, a: Pixel, b: Pixel) -> bool {
        if a.y != b.y || a == b {
            return false;
        }
        match self {
            SmearRule::Off => false,
            SmearRule::Limit(l) => a.x.abs_diff(b.x) <= l,
            SmearRule::AllSameRow => true,
        }
    }
}

impl CoincidenceStats {
    /// `N·C_ab - S_a·S_b`, the covariance scaled by `N²`.
    fn cov_numerator(&self, a: Pixel, b: Pixel) -> Option<i128> {
        let c = self.pair_count(a, b)? as i128;
        Some(self.n_frames as i128 * c - self.single(a) as i128 * self.single(b) as i128)
    }

    /// Twice the smear-interpolated numerator of `(a, b)` (same row), from
    /// `(a, b ± one row)`; `None` when no neighbor row exists.
    fn smear_numerator2(&self, a: Pixel, b: Pixel) -> Option<i128> {
        let up = (b.y + 1 < self.height)
            .then(|| self.cov_numerator(a, Pixel::new(b.x, b.y + 1)))
            .flatten();
        let down = (b.y > 0).then(|| self.cov_numerator(a, Pixel::new(b.x, b.y - 1))).flatten();
        match (up, down) {
            (Some(u), Some(d)) => Some(u + d),
            (Some(v), None) | (None, Some(v)) => Some(2 * v),
            (None, None) => None,
        }
    }

    /// Twice the (possibly smear-corrected) covariance numerator.
    fn corrected_numerator2(&self, a: Pixel, b: Pixel, rule: SmearRule) -> Option<i128> {
        if rule.applies(a, b) {
            if let Some(v) = self.smear_numerator2(a, b) {
                return Some(v);
            }
        }
        self.cov_numerator(a, b).map(|v| 2 * v)
    }

    fn denominator(&self) -> Result<f64> {
        if self.n_frames == 0 {
            return Err(Error::domain("statistics contain no frames"));
        }
        Ok((self.n_frames as f64) * (self.n_frames as f64))
    }
}

/// Covariance estimate `<C_ab> - <C_a><C_b>` of two distinct in-window pixels.
pub fn covariance(stats: &CoincidenceStats, a: Pixel, b: Pixel) -> Result<f64> {
    if a == b {
        return Err(Error::domain("covariance of a pixel with itself is not measurable"));
    }
    for p in [a, b] {
        if p.x >= stats.width || p.y >= stats.height {
            return Err(Error::domain(format!("pixel ({},{}) outside the ROI", p.x, p.y)));
        }
    }
    let num = stats.cov_numerator(a, b).ok_or_else(|| {
        Error::domain(format!(
            "pixels ({},{}) and ({},{}) are farther apart than the {}-pixel window",
            a.x, a.y, b.x, b.y, stats.window
        ))
    })?;
    Ok(num as f64 / stats.denominator()?)
}

/// Covariance of a same-row pair replaced by the mean of
/// `Γ((x1,y),(x2,y+1))` and `Γ((x1,y),(x2,y-1))`, or the single available
/// neighbor at the top and bottom rows. Pairs the rule does not cover return
/// the raw covariance.
pub fn smear_interpolate(stats: &CoincidenceStats, a: Pixel, b: Pixel, rule: SmearRule) -> Result<f64> {
    if !rule.applies(a, b) {
        return covariance(stats, a, b);
    }
    covariance(stats, a, b)?;
    let num2 = stats
        .smear_numerator2(a, b)
        .ok_or_else(|| Error::domain("no neighbor row available for smear interpolation"))?;
    Ok(num2 as f64 / (2.0 * stats.denominator()?))
}

/// Centroid marginal on the half-pixel grid of the ROI.
#[derive(Debug, Clone, PartialEq)]
pub struct CentroidMap {
    pub map: Grid,
    pub n_frames: u64,
    pub window: usize,
    pub background_removed: bool,
}

impl CentroidMap {
    pub fn without_background(&self) -> CentroidMap {
        CentroidMap {
            map: remove_background(&self.map),
            background_removed: true,
            ..self.clone()
        }
    }

    pub fn metadata(&self) -> Vec<(&'static str, String)> {
        vec![
            ("kind", "centroid".into()),
            ("axis_unit", "half sensor pixel".into()),
            ("n_frames", self.n_frames.to_string()),
            ("window_px", self.window.to_string()),
            ("background_removed", self.background_removed.to_string()),
        ]
    }
}

/// Sum of covariances of every unordered in-window pair, placed at the
/// half-pixel cell of the pair midpoint. Integer numerators are summed
/// exactly and divided once.
pub fn centroid_marginal(stats: &CoincidenceStats, rule: SmearRule) -> Result<CentroidMap> {
    let den = stats.denominator()?;
    let (w, h, win) = (stats.width, stats.height, stats.window);
    let hl = half_window_len(win);
    let mw = 2 * w;
    let mut acc = vec![0i128; mw * 2 * h];
    let offsets: Vec<(i64, i64)> = (0..hl).map(|k| slot_offset(win, k)).collect();
    for y in 0..h {
        for x in 0..w {
            let a = Pixel::new(x, y);
            for &(dx, dy) in &offsets {
                let (xb, yb) = (x as i64 + dx, y as i64 + dy);
                if !stats.contains(xb, yb) {
                    continue;
                }
                let b = Pixel::new(xb as usize, yb as usize);
                if let Some(v) = stats.corrected_numerator2(a, b, rule) {
                    acc[(y + b.y) * mw + x + b.x] += v;
                }
            }
        }
    }
    let scale = 2.0 * den;
    let values = acc.into_iter().map(|v| v as f64 / scale).collect();
    Ok(CentroidMap {
        map: Grid::from_values(mw, 2 * h, values)?,
        n_frames: stats.n_frames,
        window: win,
        background_removed: false,
    })
}

/// Difference marginal over pixel displacements `(-W..=W)²`; cell
/// `(W + dx, W + dy)` holds displacement `(dx, dy)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceMap {
    pub map: Grid,
    pub window: usize,
    pub n_frames: u64,
}

impl DifferenceMap {
    pub fn at(&self, dx: i64, dy: i64) -> Option<f64> {
        self.map.get_i(dx + self.window as i64, dy + self.window as i64)
    }
}

/// Covariance of every in-window pair accumulated at `pos_a - pos_b` for
/// both orderings, so the map is point-symmetric.
pub fn difference_marginal(stats: &CoincidenceStats, rule: SmearRule) -> Result<DifferenceMap> {
    let den = stats.denominator()?;
    let (w, h, win) = (stats.width, stats.height, stats.window);
    let hl = half_window_len(win);
    let side = 2 * win + 1;
    let mut acc = vec![0i128; side * side];
    let offsets: Vec<(i64, i64)> = (0..hl).map(|k| slot_offset(win, k)).collect();
    let c = win as i64;
    for y in 0..h {
        for x in 0..w {
            let a = Pixel::new(x, y);
            for &(dx, dy) in &offsets {
                let (xb, yb) = (x as i64 + dx, y as i64 + dy);
                if !stats.contains(xb, yb) {
                    continue;
                }
                if let Some(v) = stats.corrected_numerator2(a, Pixel::new(xb as usize, yb as usize), rule) {
                    acc[((c + dy) * side as i64 + c + dx) as usize] += v;
                    acc[((c - dy) * side as i64 + c - dx) as usize] += v;
                }
            }
        }
    }
    let scale = 2.0 * den;
    Ok(DifferenceMap {
        map: Grid::from_values(side, side, acc.into_iter().map(|v| v as f64 / scale).collect())?,
        window: win,
        n_frames: stats.n_frames,
    })
}

/// Subtracts from each cell the median of the window of up to 9×9 cells
/// centered on it, clipped to the map; even counts take the lower median.
pub fn remove_background(map: &Grid) -> Grid {
    let (w, h) = (map.width(), map.height());
    let r = 4usize;
    let mut out = Grid::zeros(w, h);
    let mut buf = Vec::with_capacity(81);
    for y in 0..h {
        let (y0, y1) = (y.saturating_sub(r), (y + r).min(h - 1));
        for x in 0..w {
            let (x0, x1) = (x.saturating_sub(r), (x + r).min(w - 1));
            buf.clear();
            for yy in y0..=y1 {
                buf.extend_from_slice(&map.values()[yy * w + x0..=yy * w + x1]);
            }
            let k = (buf.len() - 1) / 2;
            let (_, median, _) = buf.select_nth_unstable_by(k, |a, b| a.total_cmp(b));
            out.set(x, y, map.get(x, y) - *median);
        }
    }
    out
}

/// Mean count per frame of every pixel.
pub fn direct_image(stats: &CoincidenceStats) -> Result<Grid> {
    if stats.n_frames == 0 {
        return Err(Error::domain("statistics contain no frames"));
    }
    let n = stats.n_frames as f64;
    Grid::from_values(
        stats.width,
        stats.height,
        stats.singles.iter().map(|&s| s as f64 / n).collect(),
    )
}

/// Covariance of every pixel with the postselected pixel.
pub fn cpd(stats: &CoincidenceStats, rule: SmearRule) -> Result<Grid> {
    let post = stats.postselect.as_ref().ok_or(Error::CounterDisabled("postselect"))?;
    let den = stats.denominator()?;
    let (w, h, n) = (stats.width, stats.height, stats.n_frames as i128);
    let s = post.pixel;
    let ss = stats.single(s) as i128;
    let num = |b: Pixel| n * post.counts[b.y * w + b.x] as i128 - ss * stats.single(b) as i128;
    let mut g = Grid::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let b = Pixel::new(x, y);
            if b == s {
                continue;
            }
            let v2 = if rule.applies(s, b) && h > 1 {
                let up = (y + 1 < h).then(|| num(Pixel::new(x, y + 1)));
                let down = (y > 0).then(|| num(Pixel::new(x, y - 1)));
                match (up, down) {
                    (Some(u), Some(d)) => u + d,
                    (Some(v), None) | (None, Some(v)) => 2 * v,
                    (None, None) => unreachable!(),
                }
            } else {
                2 * num(b)
            };
            g.set(x, y, v2 as f64 / (2.0 * den));
        }
    }
    Ok(g)
}

/// Covariance of each pixel with its point reflection about the symmetry
/// center. Pixels whose mirror is outside the ROI, or is the pixel itself,
/// are zero.
pub fn anticorr_map(stats: &CoincidenceStats, rule: SmearRule) -> Result<Grid> {
    let anti = stats.anticorr.as_ref().ok_or(Error::CounterDisabled("anticorr"))?;
    let den = stats.denominator()?;
    let (w, h, n) = (stats.width, stats.height, stats.n_frames as i128);
    let mut g = Grid::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let (rx, ry) = (anti.center2.0 - x as i64, anti.center2.1 - y as i64);
            if !stats.contains(rx, ry) || (rx, ry) == (x as i64, y as i64) {
                continue;
            }
            let p = Pixel::new(x, y);
            let i = y * w + x;
            let sp = stats.single(p) as i128;
            let num = |d: usize| -> Option<i128> {
                let qy = ry + d as i64 - 1;
                stats
                    .contains(rx, qy)
                    .then(|| n * anti.counts[i * 3 + d] as i128 - sp * stats.single(Pixel::new(rx as usize, qy as usize)) as i128)
            };
            let q = Pixel::new(rx as usize, ry as usize);
            let v2 = if rule.applies(p, q) {
                match (num(2), num(0)) {
                    (Some(u), Some(d)) => u + d,
                    (Some(v), None) | (None, Some(v)) => 2 * v,
                    (None, None) => 2 * num(1).expect("mirror inside ROI"),
                }
            } else {
                2 * num(1).expect("mirror inside ROI")
            };
            g.set(x, y, v2 as f64 / (2.0 * den));
        }
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frame::BitFrame;
    use crate::jpd::{accumulate, AccumulateOptions};

    fn stats_from(frames: &[Vec<(usize, usize)>], w: usize, h: usize, win: usize) -> CoincidenceStats {
        let fs = frames.iter().map(|bits| {
            let mut f = BitFrame::new(w, h);
            for &(x, y) in bits {
                f.set(x, y);
            }
            Ok(f)
        });
        accumulate(fs, w, h, &AccumulateOptions::with_window(win)).unwrap()
    }

    #[test]
    fn hand_computed_covariances() {
        // a = (0,0): 1,0,1,0; b = (1,0): 1,0,0,1; c = (2,0): 1,0,1,0
        let frames = vec![vec![(0, 0), (1, 0), (2, 0)], vec![], vec![(0, 0), (2, 0)], vec![(1, 0)]];
        let s = stats_from(&frames, 3, 1, 2);
        let (a, b, c) = (Pixel::new(0, 0), Pixel::new(1, 0), Pixel::new(2, 0));
        assert_eq!(covariance(&s, a, b).unwrap(), 0.0);
        assert_eq!(covariance(&s, a, c).unwrap(), 0.25);
        assert!(covariance(&s, a, a).is_err());
        let s1 = stats_from(&frames, 3, 1, 1);
        assert!(matches!(covariance(&s1, a, c), Err(Error::Domain(_))));
    }

    #[test]
    fn smear_uses_neighbor_rows() {
        // rows 0..3; target pair (1,1)-(3,1); neighbors (1,1)-(3,2) and (1,1)-(3,0)
        let mut frames = Vec::new();
        for k in 0..20 {
            let mut f = vec![];
            if k % 2 == 0 {
                f.push((1, 1));
            }
            if k % 4 == 0 {
                f.push((3, 2));
            }
            if k < 10 {
                f.push((3, 0));
            }
            if k % 2 == 0 && k < 6 {
                f.push((3, 1));
            }
            frames.push(f);
        }
        let s = stats_from(&frames, 5, 3, 3);
        let (a, b) = (Pixel::new(1, 1), Pixel::new(3, 1));
        let up = covariance(&s, a, Pixel::new(3, 2)).unwrap();
        let down = covariance(&s, a, Pixel::new(3, 0)).unwrap();
        let got = smear_interpolate(&s, a, b, SmearRule::Limit(10)).unwrap();
        assert!((got - (up + down) / 2.0).abs() < 1e-15);
        // outside the limit: raw value
        let raw = covariance(&s, a, b).unwrap();
        assert_eq!(smear_interpolate(&s, a, b, SmearRule::Limit(1)).unwrap(), raw);
        // bottom row uses the single neighbor above
        let (c, d) = (Pixel::new(1, 0), Pixel::new(3, 0));
        let only = covariance(&s, c, Pixel::new(3, 1)).unwrap();
        assert_eq!(smear_interpolate(&s, c, d, SmearRule::Limit(10)).unwrap(), only);
        let flat = stats_from(&[vec![(0, 0), (1, 0)]], 3, 1, 2);
        assert!(smear_interpolate(&flat, Pixel::new(0, 0), Pixel::new(1, 0), SmearRule::Limit(10)).is_err());
    }

    #[test]
    fn single_pair_lands_on_midpoint_cell() {
        // one correlated pair (0,0),(3,1) lit together in half the frames
        let frames = vec![vec![(0, 0), (3, 1)], vec![]];
        let s = stats_from(&frames, 5, 4, 3);
        let m = centroid_marginal(&s, SmearRule::Off).unwrap();
        assert_eq!((m.map.width(), m.map.height()), (10, 8));
        for y in 0..8 {
            for x in 0..10 {
                let v = m.map.get(x, y);
                if (x, y) == (3, 1) {
                    assert_eq!(v, 0.25);
                } else {
                    assert_eq!(v, 0.0);
                }
            }
        }
    }

    #[test]
    fn difference_map_is_point_symmetric() {
        let frames: Vec<Vec<(usize, usize)>> = (0..50)
            .map(|k| vec![(k % 7, k % 3), ((k * 3) % 7, (k + 1) % 3), (k % 5, 2)])
            .collect();
        let s = stats_from(&frames, 7, 3, 3);
        let d = difference_marginal(&s, SmearRule::Limit(10)).unwrap();
        for dy in -3..=3 {
            for dx in -3..=3 {
                assert_eq!(d.at(dx, dy).unwrap().to_bits(), d.at(-dx, -dy).unwrap().to_bits());
            }
        }
    }

    #[test]
    fn background_cases() {
        let c = Grid::from_values(12, 11, vec![3.5; 132]).unwrap();
        assert!(remove_background(&c).values().iter().all(|&v| v == 0.0));
        let mut spike = Grid::zeros(12, 11);
        spike.set(6, 5, 2.0);
        let r = remove_background(&spike);
        assert_eq!(r.get(6, 5), 2.0);
        assert!(r.values().iter().all(|&v| v <= 2.0 && v >= 0.0));
        assert_eq!(remove_background(&r), r);
        // corner window is 5x5: values 0..25 in the corner block, median 12
        let mut g = Grid::from_values(12, 11, vec![100.0; 132]).unwrap();
        for y in 0..5 {
            for x in 0..5 {
                g.set(x, y, (y * 5 + x) as f64);
            }
        }
        assert_eq!(remove_background(&g).get(0, 0), -12.0);
        // two cells: lower median
        let two = Grid::from_values(2, 1, vec![1.0, 5.0]).unwrap();
        assert_eq!(remove_background(&two).values(), &[0.0, 4.0]);
    }

    #[test]
    fn optional_counters_required() {
        let s = stats_from(&[vec![(0, 0)]], 3, 3, 1);
        assert!(matches!(cpd(&s, SmearRule::Off), Err(Error::CounterDisabled(_))));
        assert!(matches!(anticorr_map(&s, SmearRule::Off), Err(Error::CounterDisabled(_))));
        let d = direct_image(&s).unwrap();
        assert_eq!(d.get(0, 0), 1.0);
    }

    #[test]
    fn anticorr_and_cpd_hand_counts() {
        let (w, h) = (5, 3);
        // center at pixel (2,1): reflect(x,y) = (4-x, 2-y)
        let frames: Vec<BitFrame> = (0..8)
            .map(|k| {
                let mut f = BitFrame::new(w, h);
                if k % 2 == 0 {
                    f.set(0, 0);
                    f.set(4, 2);
                }
                if k % 4 == 1 {
                    f.set(1, 1);
                }
                f
            })
            .collect();
        let opts = AccumulateOptions {
            symmetry_center2: Some((4, 2)),
            postselect: Some(Pixel::new(0, 0)),
            ..AccumulateOptions::with_window(2)
        };
        let s = accumulate(frames.into_iter().map(Ok), w, h, &opts).unwrap();
        let a = anticorr_map(&s, SmearRule::Off).unwrap();
        // (0,0)-(4,2): C = 4/8, singles 4/8 each -> 0.5 - 0.25
        assert_eq!(a.get(0, 0), 0.25);
        assert_eq!(a.get(4, 2), 0.25);
        assert_eq!(a.get(2, 1), 0.0);
        let c = cpd(&s, SmearRule::Off).unwrap();
        assert_eq!(c.get(4, 2), 0.25);
        assert_eq!(c.get(1, 1), 0.0 - 0.5 * 0.25);
        assert_eq!(c.get(0, 0), 0.0);
    }
}
