//! From a centroid map to phase: per-aperture peaks, gradients, modal
//! reconstruction and SNR diagnostics.

use std::fmt::Write as _;
use std::ops::Range;

use crate::error::{Error, Result};
use crate::geometry::{ApertureIndex, OpticalConfig, Point2};
use crate::grid::Grid;
use crate::legendre::{mode_count, solve_modal, GradientSample, LegendreCoeffs, ModalSolution, PhaseRaster, DEFAULT_RASTER_SIZE};

/// Ordered from best to worst.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Quality {
    Ok,
    OutOfRange,
    NoPeak,
}

impl Quality {
    pub fn as_str(self) -> &'static str {
        match self {
            Quality::Ok => "ok",
            Quality::OutOfRange => "out_of_range",
            Quality::NoPeak => "no_peak",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ok" => Some(Quality::Ok),
            "out_of_range" => Some(Quality::OutOfRange),
            "no_peak" => Some(Quality::NoPeak),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    /// Position in half-resolution cell units (cell `i` has center `i`).
    pub cell: (f64, f64),
    pub quality: Quality,
}

fn aperture_window(map: &Grid, cfg: &OpticalConfig, a: ApertureIndex) -> Result<(Range<usize>, Range<usize>)> {
    let (xr, yr) = cfg.aperture_cells(a)?;
    if xr.start < 0 || yr.start < 0 || xr.end as usize > map.width() || yr.end as usize > map.height() {
        return Err(Error::domain(format!("aperture {a} extends beyond the centroid map")));
    }
    Ok((xr.start as usize..xr.end as usize, yr.start as usize..yr.end as usize))
}

/// Top-left corner of the `n×n` block inside the window with the largest
/// sum; ties go to the first block in row-major order.
fn best_block(map: &Grid, xr: &Range<usize>, yr: &Range<usize>, n: usize) -> Option<(usize, usize)> {
    if xr.len() < n || yr.len() < n {
        return None;
    }
    let mut best: Option<((usize, usize), f64)> = None;
    for y in yr.start..=yr.end - n {
        for x in xr.start..=xr.end - n {
            let mut s = 0.0;
            for yy in y..y + n {
                for xx in x..x + n {
                    s += map.get(xx, yy);
                }
            }
            if best.map_or(true, |(_, b)| s > b) {
                best = Some(((x, y), s));
            }
        }
    }
    best.map(|(p, _)| p)
}

fn clip(lo: i64, hi: i64, r: &Range<usize>) -> Range<usize> {
    (lo.max(r.start as i64) as usize)..((hi + 1).min(r.end as i64) as usize)
}

/// Sub-cell peak inside aperture `a`: the 4×4 block with the largest sum,
/// refined by the nonnegative-weighted mean over the 8×8 block centered on
/// it, clipped to the aperture.
pub fn find_peak(map: &Grid, cfg: &OpticalConfig, a: ApertureIndex) -> Result<Peak> {
    let (xr, yr) = aperture_window(map, cfg, a)?;
    let no_peak = Peak {
        cell: (f64::NAN, f64::NAN),
        quality: Quality::NoPeak,
    };
    let positive = yr.clone().any(|y| xr.clone().any(|x| map.get(x, y) > 0.0));
    if !positive {
        return Ok(no_peak);
    }
    let Some((bx, by)) = best_block(map, &xr, &yr, 4) else {
        return Ok(no_peak);
    };
    let (bx, by) = (bx as i64, by as i64);
    let (mut sw, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for y in clip(by - 2, by + 5, &yr) {
        for x in clip(bx - 2, bx + 5, &xr) {
            let v = map.get(x, y).max(0.0);
            sw += v;
            sx += v * x as f64;
            sy += v * y as f64;
        }
    }
    if sw <= 0.0 {
        return Ok(no_peak);
    }
    Ok(Peak {
        cell: (sx / sw, sy / sw),
        quality: Quality::Ok,
    })
}

/// Physical position of a fractional half-resolution cell coordinate.
pub fn cell_to_position(cfg: &OpticalConfig, cell: (f64, f64)) -> Point2 {
    let step = cfg.sensor_pixel / 2.0;
    Point2::new(cfg.roi_origin.x + cell.0 * step, cfg.roi_origin.y + cell.1 * step)
}

/// `κ = (peak - aperture center)·k/f_sh`, flagged when outside the dynamic range.
pub fn to_gradient(peak: &Peak, cfg: &OpticalConfig, a: ApertureIndex) -> Result<(f64, f64, Quality)> {
    if peak.quality == Quality::NoPeak {
        return Ok((0.0, 0.0, Quality::NoPeak));
    }
    let d = cell_to_position(cfg, peak.cell) - cfg.aperture_center(a)?;
    let (kx, ky) = (cfg.displacement_to_gradient(d.x), cfg.displacement_to_gradient(d.y));
    let q = if cfg.within_dynamic_range(kx, ky) {
        peak.quality
    } else {
        Quality::OutOfRange
    };
    Ok((kx, ky, q))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientEntry {
    pub aperture: ApertureIndex,
    /// rad/m
    pub kx: f64,
    pub ky: f64,
    /// Peak position in half-resolution cell units, when one was found.
    pub peak: Option<(f64, f64)>,
    pub quality: Quality,
}

/// Per-aperture gradients over the full lattice, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    pub grid: (usize, usize),
    pub entries: Vec<GradientEntry>,
}

impl GradientField {
    pub fn zeros(cfg: &OpticalConfig) -> Self {
        GradientField {
            grid: cfg.aperture_grid,
            entries: cfg
                .apertures()
                .map(|a| GradientEntry {
                    aperture: a,
                    kx: 0.0,
                    ky: 0.0,
                    peak: None,
                    quality: Quality::Ok,
                })
                .collect(),
        }
    }

    /// Gradients of a modal phase averaged over each aperture.
    pub fn from_modal(cfg: &OpticalConfig, coeffs: &LegendreCoeffs) -> Result<Self> {
        let h = cfg.normalized_halfwidth();
        let mut f = GradientField::zeros(cfg);
        for e in &mut f.entries {
            let c = cfg.to_normalized(cfg.aperture_center(e.aperture)?)?;
            let row = crate::legendre::design_row(c, h, coeffs.max_degree())?;
            let gx: f64 = row.kx.iter().zip(coeffs.values()).map(|(a, b)| a * b).sum();
            let gy: f64 = row.ky.iter().zip(coeffs.values()).map(|(a, b)| a * b).sum();
            e.kx = gx / cfg.rescale_halfwidth;
            e.ky = gy / cfg.rescale_halfwidth;
            if !cfg.within_dynamic_range(e.kx, e.ky) {
                e.quality = Quality::OutOfRange;
            }
        }
        Ok(f)
    }

    pub fn count(&self, q: Quality) -> usize {
        self.entries.iter().filter(|e| e.quality == q).count()
    }

    pub fn flag_summary(&self) -> String {
        let bad: Vec<String> = self
            .entries
            .iter()
            .filter(|e| e.quality != Quality::Ok)
            .map(|e| format!("{}:{}", e.aperture, e.quality.as_str()))
            .collect();
        if bad.is_empty() {
            "all ok".into()
        } else {
            bad.join(", ")
        }
    }

    /// Text table, one `col row kx ky flag` line per aperture.
    pub fn to_table(&self) -> String {
        let mut s = String::from("# col row kx_rad_per_m ky_rad_per_m flag\n");
        for e in &self.entries {
            let _ = writeln!(s, "{} {} {:.17e} {:.17e} {}", e.aperture.col, e.aperture.row, e.kx, e.ky, e.quality.as_str());
        }
        s
    }

    pub fn parse_table(text: &str, grid: (usize, usize)) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |m: &str| Error::Config {
                line: i + 1,
                message: m.to_string(),
            };
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 5 {
                return Err(bad("expected `col row kx ky flag`"));
            }
            let col = f[0].parse().map_err(|_| bad("bad column index"))?;
            let row = f[1].parse().map_err(|_| bad("bad row index"))?;
            let kx = f[2].parse().map_err(|_| bad("bad kx"))?;
            let ky = f[3].parse().map_err(|_| bad("bad ky"))?;
            let quality = Quality::parse(f[4]).ok_or_else(|| bad("unknown flag"))?;
            entries.push(GradientEntry {
                aperture: ApertureIndex::new(col, row),
                kx,
                ky,
                peak: None,
                quality,
            });
        }
        if entries.len() != grid.0 * grid.1 {
            return Err(Error::domain(format!(
                "gradient table has {} entries, lattice has {}",
                entries.len(),
                grid.0 * grid.1
            )));
        }
        Ok(GradientField { grid, entries })
    }
}

/// Peaks and gradients of every aperture.
pub fn measure_gradients(map: &Grid, cfg: &OpticalConfig) -> Result<GradientField> {
    let mut entries = Vec::with_capacity(cfg.aperture_count());
    for a in cfg.apertures() {
        let peak = find_peak(map, cfg, a)?;
        let (kx, ky, quality) = to_gradient(&peak, cfg, a)?;
        entries.push(GradientEntry {
            aperture: a,
            kx,
            ky,
            peak: (peak.quality != Quality::NoPeak).then_some(peak.cell),
            quality,
        });
    }
    Ok(GradientField {
        grid: cfg.aperture_grid,
        entries,
    })
}

/// Component-wise gradient difference; each aperture keeps the worse flag.
pub fn subtract_reference(field: &GradientField, reference: &GradientField) -> Result<GradientField> {
    if field.grid != reference.grid || field.entries.len() != reference.entries.len() {
        return Err(Error::domain("gradient fields cover different aperture grids"));
    }
    let entries = field
        .entries
        .iter()
        .zip(&reference.entries)
        .map(|(a, b)| {
            if a.aperture != b.aperture {
                return Err(Error::domain("gradient fields list apertures in different order"));
            }
            Ok(GradientEntry {
                kx: a.kx - b.kx,
                ky: a.ky - b.ky,
                quality: a.quality.max(b.quality),
                ..*a
            })
        })
        .collect::<Result<_>>()?;
    Ok(GradientField {
        grid: field.grid,
        entries,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub solution: ModalSolution,
    pub raster: PhaseRaster,
    pub used_apertures: usize,
}

/// Modal least-squares fit of the ok-flagged apertures.
pub fn reconstruct(field: &GradientField, cfg: &OpticalConfig, max_degree: usize) -> Result<Reconstruction> {
    let unknowns = mode_count(max_degree);
    let mut samples = Vec::new();
    for e in field.entries.iter().filter(|e| e.quality == Quality::Ok) {
        samples.push(GradientSample {
            center: cfg.to_normalized(cfg.aperture_center(e.aperture)?)?,
            kx: cfg.gradient_to_normalized(e.kx),
            ky: cfg.gradient_to_normalized(e.ky),
        });
    }
    if 2 * samples.len() < unknowns {
        return Err(Error::InsufficientApertures {
            usable: samples.len(),
            equations: 2 * samples.len(),
            unknowns,
            flags: field.flag_summary(),
        });
    }
    let solution = solve_modal(&samples, cfg.normalized_halfwidth(), max_degree)?;
    let raster = crate::legendre::rasterize(&solution.coeffs, DEFAULT_RASTER_SIZE)?;
    Ok(Reconstruction {
        solution,
        raster,
        used_apertures: samples.len(),
    })
}

/// Peak-to-noise ratio inside aperture `a`: mean of the 2×2 block with the
/// largest sum over the population standard deviation of the aperture cells
/// outside the 10×10 block centered on it. Zero noise gives `+inf`.
pub fn snr(map: &Grid, cfg: &OpticalConfig, a: ApertureIndex) -> Result<f64> {
    let (xr, yr) = aperture_window(map, cfg, a)?;
    let (bx, by) = best_block(map, &xr, &yr, 2).ok_or_else(|| Error::domain("aperture smaller than 2x2 cells"))?;
    let signal = (map.get(bx, by) + map.get(bx + 1, by) + map.get(bx, by + 1) + map.get(bx + 1, by + 1)) / 4.0;
    let (ex, ey) = (bx as i64 - 4..bx as i64 + 6, by as i64 - 4..by as i64 + 6);
    let mut vals = Vec::new();
    for y in yr.clone() {
        for x in xr.clone() {
            if !(ex.contains(&(x as i64)) && ey.contains(&(y as i64))) {
                vals.push(map.get(x, y));
            }
        }
    }
    if vals.is_empty() {
        return Err(Error::domain("no aperture cells outside the peak block"));
    }
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let sd = (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
    Ok(if sd == 0.0 { f64::INFINITY } else { signal / sd })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLawFit {
    pub amplitude: f64,
    pub exponent: f64,
    pub r_squared: f64,
    /// Points dropped for nonpositive or non-finite SNR.
    pub excluded: usize,
}

/// Least-squares fit of `snr = A·N^b` on log-log values.
pub fn fit_power_law(points: &[(f64, f64)]) -> Result<PowerLawFit> {
    let valid: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|&(n, s)| n > 0.0 && s > 0.0 && s.is_finite())
        .map(|(n, s)| (n.ln(), s.ln()))
        .collect();
    let excluded = points.len() - valid.len();
    if valid.len() < 3 {
        return Err(Error::domain(format!(
            "power-law fit needs at least 3 usable points, got {}",
            valid.len()
        )));
    }
    let m = valid.len() as f64;
    let mx = valid.iter().map(|p| p.0).sum::<f64>() / m;
    let my = valid.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = valid.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::domain("power-law fit needs distinct N values"));
    }
    let sxy: f64 = valid.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let ss_tot: f64 = valid.iter().map(|p| (p.1 - my) * (p.1 - my)).sum();
    let ss_res: f64 = valid.iter().map(|p| (p.1 - a - b * p.0).powi(2)).sum();
    let r_squared = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(PowerLawFit {
        amplitude: a.exp(),
        exponent: b,
        r_squared,
        excluded,
    })
}

/// Mean over apertures of the share of positive map mass inside the best
/// 4×4 block.
pub fn peak_concentration(map: &Grid, cfg: &OpticalConfig) -> Result<f64> {
    let mut total = 0.0;
    for a in cfg.apertures() {
        let (xr, yr) = aperture_window(map, cfg, a)?;
        let pos = |x: usize, y: usize| map.get(x, y).max(0.0);
        let all: f64 = yr.clone().flat_map(|y| xr.clone().map(move |x| (x, y))).map(|(x, y)| pos(x, y)).sum();
        if all <= 0.0 {
            continue;
        }
        let (bx, by) = best_block(&map.map(|v| v.max(0.0)), &xr, &yr, 4).expect("aperture wider than 4 cells");
        let block: f64 = (by..by + 4).flat_map(|y| (bx..bx + 4).map(move |x| (x, y))).map(|(x, y)| pos(x, y)).sum();
        total += block / all;
    }
    Ok(total / cfg.aperture_count() as f64)
}

/// Share of positive map mass within `radius` cells of the largest value.
pub fn peak_fraction(map: &Grid, radius: usize) -> f64 {
    let (px, py) = map.argmax();
    let (mut near, mut all) = (0.0, 0.0);
    for y in 0..map.height() {
        for x in 0..map.width() {
            let v = map.get(x, y).max(0.0);
            all += v;
            if x.abs_diff(px) <= radius && y.abs_diff(py) <= radius {
                near += v;
            }
        }
    }
    if all > 0.0 {
        near / all
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{preset_eq7, preset_saddle};

    fn cfg() -> OpticalConfig {
        OpticalConfig::default()
    }

    fn center_cell(cfg: &OpticalConfig, a: ApertureIndex) -> (usize, usize) {
        let (i, j) = cfg.half_res_index(cfg.aperture_center(a).unwrap());
        (i as usize, j as usize)
    }

    #[test]
    fn spike_peaks() {
        let cfg = cfg();
        let (w, h) = cfg.half_res_dims();
        let a = ApertureIndex::new(3, 3);
        let (cx, cy) = center_cell(&cfg, a);
        let mut m = Grid::zeros(w, h);
        m.set(cx, cy, 1.0);
        let p = find_peak(&m, &cfg, a).unwrap();
        assert_eq!(p.cell, (cx as f64, cy as f64));
        assert_eq!(p.quality, Quality::Ok);
        let (kx, ky, q) = to_gradient(&p, &cfg, a).unwrap();
        assert_eq!((kx, ky, q), (0.0, 0.0, Quality::Ok));
        // shifted by one half-pixel
        let mut m2 = Grid::zeros(w, h);
        m2.set(cx + 1, cy, 1.0);
        assert_eq!(find_peak(&m2, &cfg, a).unwrap().cell, (cx as f64 + 1.0, cy as f64));
        // two equal spikes: midpoint
        let mut m3 = Grid::zeros(w, h);
        m3.set(cx - 1, cy + 1, 2.0);
        m3.set(cx + 2, cy + 1, 2.0);
        assert_eq!(find_peak(&m3, &cfg, a).unwrap().cell, (cx as f64 + 0.5, cy as f64 + 1.0));
        // nothing positive
        let m4 = Grid::zeros(w, h).map(|_| -1.0);
        assert_eq!(find_peak(&m4, &cfg, a).unwrap().quality, Quality::NoPeak);
    }

    #[test]
    fn translation_equivariance() {
        let cfg = cfg();
        let (w, h) = cfg.half_res_dims();
        let a = ApertureIndex::new(2, 4);
        let (cx, cy) = center_cell(&cfg, a);
        let blob = [(0i64, 0i64, 3.0), (1, 0, 1.0), (0, 1, 2.0), (-1, -1, 0.5), (2, 1, -0.3)];
        let make = |sx: i64, sy: i64| {
            let mut m = Grid::zeros(w, h);
            for &(dx, dy, v) in &blob {
                m.set((cx as i64 + dx + sx) as usize, (cy as i64 + dy + sy) as usize, v);
            }
            m
        };
        let p0 = find_peak(&make(0, 0), &cfg, a).unwrap().cell;
        for (sx, sy) in [(3, 0), (-2, 5), (4, -4)] {
            let p = find_peak(&make(sx, sy), &cfg, a).unwrap().cell;
            assert!((p.0 - p0.0 - sx as f64).abs() < 1e-12 && (p.1 - p0.1 - sy as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_constant() {
        let cfg = cfg();
        let k = 2.0 * std::f64::consts::PI / 808e-9;
        let expect = k * 6.5e-6 / 14.6e-3;
        // 2π/808e-9 · 6.5e-6 / 14.6e-3 = 3462.0155... rad/m
        assert!((expect - 3462.015_5).abs() < 1e-3);
        let a = ApertureIndex::new(3, 3);
        let (cx, cy) = center_cell(&cfg, a);
        let p = Peak { cell: (cx as f64 + 1.0, cy as f64), quality: Quality::Ok };
        let (kx, ky, q) = to_gradient(&p, &cfg, a).unwrap();
        assert!((kx - expect).abs() < 1e-9 * expect);
        assert_eq!(ky, 0.0);
        assert_eq!(q, Quality::Ok);
        // half a pitch: exactly on the dynamic-range boundary
        let edge = Peak { cell: (cx as f64 + 150.0 / 6.5, cy as f64), quality: Quality::Ok };
        assert_eq!(to_gradient(&edge, &cfg, a).unwrap().2, Quality::OutOfRange);
    }

    #[test]
    fn reference_subtraction() {
        let cfg = cfg();
        let f = GradientField::from_modal(&cfg, &preset_saddle()).unwrap();
        let zero = subtract_reference(&f, &f).unwrap();
        assert!(zero.entries.iter().all(|e| e.kx == 0.0 && e.ky == 0.0));
        assert_eq!(subtract_reference(&f, &GradientField::zeros(&cfg)).unwrap(), f);
        let other = OpticalConfig { aperture_grid: (5, 5), ..cfg.clone() };
        assert!(subtract_reference(&f, &GradientField::zeros(&other)).is_err());
    }

    #[test]
    fn reconstruct_analytic_fields() {
        let cfg = cfg();
        for truth in [preset_saddle(), preset_eq7()] {
            let f = GradientField::from_modal(&cfg, &truth).unwrap();
            let r = reconstruct(&f, &cfg, 5).unwrap();
            for ((_, a), (_, b)) in r.solution.coeffs.iter().zip(truth.iter()) {
                assert!((a - b).abs() < 1e-8, "{a} vs {b}");
            }
            assert_eq!(r.used_apertures, 49);
        }
        let z = reconstruct(&GradientField::zeros(&cfg), &cfg, 5).unwrap();
        assert!(z.solution.coeffs.values().iter().all(|v| *v == 0.0));
        assert_eq!(z.solution.residual, 0.0);
    }

    #[test]
    fn out_of_range_apertures_do_not_contribute() {
        let cfg = cfg();
        let truth = preset_eq7();
        let f = GradientField::from_modal(&cfg, &truth).unwrap();
        let mut noisy = f.clone();
        noisy.entries[10].kx += 123.0;
        noisy.entries[10].ky -= 55.0;
        let mut flagged = noisy.clone();
        flagged.entries[10].kx = 1e7;
        flagged.entries[10].quality = Quality::OutOfRange;
        let mut deleted = noisy.clone();
        deleted.entries.remove(10);
        let a = reconstruct(&flagged, &cfg, 5).unwrap();
        let b = reconstruct(&deleted, &cfg, 5).unwrap();
        assert_eq!(a.solution.coeffs, b.solution.coeffs);
        assert_eq!(a.used_apertures, 48);
    }

    #[test]
    fn insufficient_apertures() {
        let cfg = cfg();
        let mut f = GradientField::zeros(&cfg);
        for e in f.entries.iter_mut().skip(17) {
            e.quality = Quality::NoPeak;
        }
        let err = reconstruct(&f, &cfg, 5).unwrap_err();
        assert!(matches!(err, Error::InsufficientApertures { usable: 17, .. }));
        assert!(err.is_numerical());
    }

    #[test]
    fn gradient_table_round_trip() {
        let cfg = cfg();
        let mut f = GradientField::from_modal(&cfg, &preset_eq7()).unwrap();
        f.entries[3].quality = Quality::NoPeak;
        f.entries.iter_mut().for_each(|e| e.peak = None);
        let back = GradientField::parse_table(&f.to_table(), cfg.aperture_grid).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn snr_cases() {
        let cfg = cfg();
        let (w, h) = cfg.half_res_dims();
        let a = ApertureIndex::new(3, 3);
        let (cx, cy) = center_cell(&cfg, a);
        let mut m = Grid::zeros(w, h);
        m.set(cx, cy, 1.0);
        assert_eq!(snr(&m, &cfg, a).unwrap(), f64::INFINITY);
        // checkerboard noise of amplitude 1 outside, 2x2 block of 10
        let mut n = Grid::zeros(w, h);
        let (xr, yr) = cfg.aperture_cells(a).unwrap();
        for y in yr.clone() {
            for x in xr.clone() {
                n.set(x as usize, y as usize, if (x + y) % 2 == 0 { 1.0 } else { -1.0 });
            }
        }
        for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
            n.set(cx + dx, cy + dy, 10.0);
        }
        let s = snr(&n, &cfg, a).unwrap();
        assert!((s - 10.0).abs() < 0.2, "{s}");
    }

    #[test]
    fn power_law_fit() {
        let pts: Vec<(f64, f64)> = [5e3, 1e4, 2e4, 4e4, 1e5].iter().map(|&n| (n, 0.02 * f64::powf(n, 0.5))).collect();
        let f = fit_power_law(&pts).unwrap();
        assert!((f.exponent - 0.5).abs() < 1e-9);
        assert!((f.amplitude - 0.02).abs() < 1e-9);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        let mut with_bad = pts.clone();
        with_bad.push((2e5, f64::INFINITY));
        with_bad.push((3e5, -1.0));
        assert_eq!(fit_power_law(&with_bad).unwrap().excluded, 2);
        assert!(fit_power_law(&pts[..2]).is_err());
        assert!(fit_power_law(&[(1.0, 1.0), (1.0, 2.0), (1.0, 3.0)]).is_err());
    }
}
