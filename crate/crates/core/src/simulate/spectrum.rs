use num_complex::Complex64;
use rayon::prelude::*;

use super::PhaseScreen;
use crate::error::{Error, Result};
use crate::geometry::{ApertureIndex, OpticalConfig, Point2};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumOptions {
    /// Input samples across the aperture per half-resolution cell width.
    pub input_oversample: f64,
    /// Sub-samples per half-resolution cell and axis when integrating the
    /// intensity over a cell.
    pub subcells: usize,
    /// Half-width of the evaluated focal window around the aperture center.
    /// `None` uses one aperture pitch.
    pub window_halfwidth: Option<f64>,
    /// Exponent of the field: 2 for the pair centroid, 1 for a single photon.
    pub field_power: f64,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        SpectrumOptions {
            input_oversample: 2.0,
            subcells: 3,
            window_halfwidth: None,
            field_power: 2.0,
        }
    }
}

/// Focal-plane intensity `|∫ e^{i p Φ(ρ)} e^{-i q·ρ} d²ρ|²` over the square
/// `|ρ|∞ ≤ a`, evaluated at `q = q_per_x * (x, y)` for every `(x, y)` in
/// `ys × xs`. The result is row-major with `xs.len()` columns. The integral
/// uses a `k_samples`² midpoint rule evaluated as a separable matrix
/// Fourier transform.
pub fn focal_spectrum(
    phase: impl Fn(Point2) -> f64,
    a: f64,
    field_power: f64,
    q_per_x: f64,
    k_samples: usize,
    xs: &[f64],
    ys: &[f64],
) -> Vec<f64> {
    let k = k_samples;
    let d = 2.0 * a / k as f64;
    let rho: Vec<f64> = (0..k).map(|i| -a + (i as f64 + 0.5) * d).collect();
    let mut u = Vec::with_capacity(k * k);
    for &ry in &rho {
        for &rx in &rho {
            u.push(Complex64::cis(field_power * phase(Point2::new(rx, ry))));
        }
    }
    let kernel = |pts: &[f64]| -> Vec<Complex64> {
        let mut e = Vec::with_capacity(pts.len() * k);
        for &x in pts {
            for &r in &rho {
                e.push(Complex64::cis(-q_per_x * x * r));
            }
        }
        e
    };
    let ex = kernel(xs);
    let ey = kernel(ys);
    let (mx, my) = (xs.len(), ys.len());
    // t[ky][ix] = Σ_kx u[ky][kx] ex[ix][kx]
    let mut t = vec![Complex64::new(0.0, 0.0); k * mx];
    for ky in 0..k {
        let urow = &u[ky * k..(ky + 1) * k];
        for ix in 0..mx {
            let erow = &ex[ix * k..(ix + 1) * k];
            t[ky * mx + ix] = urow.iter().zip(erow).map(|(a, b)| a * b).sum();
        }
    }
    // r[iy][ix] = Σ_ky ey[iy][ky] t[ky][ix]
    let scale = d.powi(4);
    let mut out = vec![0.0; my * mx];
    let mut acc = vec![Complex64::new(0.0, 0.0); mx];
    for iy in 0..my {
        acc.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        for ky in 0..k {
            let w = ey[iy * k + ky];
            let trow = &t[ky * mx..(ky + 1) * mx];
            for (a, b) in acc.iter_mut().zip(trow) {
                *a += w * b;
            }
        }
        for (o, a) in out[iy * mx..(iy + 1) * mx].iter_mut().zip(&acc) {
            *o = a.norm_sqr() * scale;
        }
    }
    out
}

/// Per-aperture pair-centroid distribution over half-resolution cells.
#[derive(Debug, Clone, PartialEq)]
pub struct CentroidSpectrum {
    pub aperture: ApertureIndex,
    /// Half-resolution index of the first (lower-left) cell of the window.
    pub origin: (i64, i64),
    pub width: usize,
    pub height: usize,
    /// Probabilities, row-major, summing to one.
    pub weights: Vec<f64>,
}

impl CentroidSpectrum {
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[j * self.width + i]
    }

    /// Mean centroid position.
    pub fn mean(&self, cfg: &OpticalConfig) -> Point2 {
        let mut m = Point2::ZERO;
        for j in 0..self.height {
            for i in 0..self.width {
                let c = cfg.half_res_center(self.origin.0 + i as i64, self.origin.1 + j as i64);
                m = m + c * self.weight(i, j);
            }
        }
        m
    }
}

pub(crate) fn check_screen_covers(cfg: &OpticalConfig, screen: &PhaseScreen, a: ApertureIndex) -> Result<()> {
    screen.validate()?;
    if screen.raster.is_none() {
        return Ok(());
    }
    let c = cfg.aperture_center(a)?;
    let h = cfg.aperture_pitch / 2.0;
    let tol = 1e-9;
    for corner in [Point2::new(c.x - h, c.y - h), Point2::new(c.x + h, c.y + h)] {
        let p = cfg.to_normalized_unchecked(corner);
        if p.x.abs() > 1.0 + tol || p.y.abs() > 1.0 + tol {
            return Err(Error::domain(format!(
                "phase raster does not cover aperture {a} (normalized corner ({:.4}, {:.4}))",
                p.x, p.y
            )));
        }
    }
    Ok(())
}

pub(crate) fn input_samples(cfg: &OpticalConfig, opts: &SpectrumOptions) -> usize {
    let cells = cfg.aperture_pitch / (cfg.sensor_pixel / 2.0);
    let k = (opts.input_oversample * cells).ceil() as usize;
    (k.max(16) + 1) & !1
}

/// Cell-integrated focal intensity of one aperture on a window of
/// half-resolution cells around `center`, normalized to unit sum.
pub(crate) fn cell_spectrum(
    cfg: &OpticalConfig,
    center: Point2,
    phase_local: impl Fn(Point2) -> f64,
    q_per_x: f64,
    opts: &SpectrumOptions,
) -> Result<((i64, i64), usize, usize, Vec<f64>)> {
    let w = opts.window_halfwidth.unwrap_or(cfg.aperture_pitch);
    let (i0, j0) = cfg.half_res_index(Point2::new(center.x - w, center.y - w));
    let (i1, j1) = cfg.half_res_index(Point2::new(center.x + w, center.y + w));
    let (nx, ny) = ((i1 - i0 + 1) as usize, (j1 - j0 + 1) as usize);
    let s = opts.subcells.max(1);
    let step = cfg.sensor_pixel / 2.0;
    let sub: Vec<f64> = (0..s).map(|k| ((k as f64 + 0.5) / s as f64 - 0.5) * step).collect();
    let xs: Vec<f64> = (0..nx)
        .flat_map(|i| {
            let cx = cfg.half_res_center(i0 + i as i64, 0).x - center.x;
            sub.iter().map(move |o| cx + o)
        })
        .collect();
    let ys: Vec<f64> = (0..ny)
        .flat_map(|j| {
            let cy = cfg.half_res_center(0, j0 + j as i64).y - center.y;
            sub.iter().map(move |o| cy + o)
        })
        .collect();
    let fine = focal_spectrum(
        phase_local,
        cfg.aperture_pitch / 2.0,
        opts.field_power,
        q_per_x,
        input_samples(cfg, opts),
        &xs,
        &ys,
    );
    let mut cells = vec![0.0; nx * ny];
    let fw = nx * s;
    for (r, row) in fine.chunks_exact(fw).enumerate() {
        let j = r / s;
        for (c, v) in row.iter().enumerate() {
            cells[j * nx + c / s] += v;
        }
    }
    let total: f64 = cells.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::domain("focal spectrum has no finite power"));
    }
    cells.iter_mut().for_each(|v| *v /= total);
    Ok(((i0, j0), nx, ny, cells))
}

/// Distribution of the pair centroid behind aperture `a`:
/// `|FT[e^{2iΦ}]|²` mapped to the focal plane (with `field_power = 2`).
pub fn aperture_centroid_spectrum(
    cfg: &OpticalConfig,
    screen: &PhaseScreen,
    a: ApertureIndex,
    opts: &SpectrumOptions,
) -> Result<CentroidSpectrum> {
    check_screen_covers(cfg, screen, a)?;
    let c = cfg.aperture_center(a)?;
    let q_per_x = opts.field_power * cfg.wave_number() / cfg.f_sh;
    let (origin, width, height, weights) =
        cell_spectrum(cfg, c, |rho| screen.phase_at(cfg, c + rho), q_per_x, opts)?;
    Ok(CentroidSpectrum {
        aperture: a,
        origin,
        width,
        height,
        weights,
    })
}

pub(crate) fn all_spectra(
    cfg: &OpticalConfig,
    screen: &PhaseScreen,
    opts: &SpectrumOptions,
) -> Result<Vec<CentroidSpectrum>> {
    let aps: Vec<ApertureIndex> = cfg.apertures().collect();
    aps.par_iter()
        .map(|&a| aperture_centroid_spectrum(cfg, screen, a, opts))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::legendre::LegendreCoeffs;
    use crate::simulate::profile_fwhm;

    #[test]
    fn flat_aperture_matches_analytic_sinc() {
        // |∫_{-a}^{a} e^{-iqρ} dρ|² = (2 sin(qa)/q)², squared per axis
        let a = 150e-6;
        let q_per_x = 2.0 * 1e6;
        let xs = [0.0, 1e-6, 3e-6, 7.5e-6];
        let got = focal_spectrum(|_| 0.0, a, 2.0, q_per_x, 96, &xs, &[0.0]);
        for (x, g) in xs.iter().zip(&got) {
            let q = q_per_x * x;
            let one = if q == 0.0 { 2.0 * a } else { 2.0 * (q * a).sin() / q };
            let expect = one * one * (2.0 * a) * (2.0 * a);
            assert!((g - expect).abs() < 1e-3 * expect.max(1e-30) + 1e-22, "{x}: {g} vs {expect}");
        }
    }

    #[test]
    fn tilt_shifts_centroid_by_f_kappa_over_k() {
        let cfg = OpticalConfig::default();
        let kappa = 2.0e4;
        // phase = kappa * physical x, expressed as a modal tilt
        let alpha = kappa * cfg.rescale_halfwidth;
        let screen = PhaseScreen::modal(LegendreCoeffs::from_pairs(5, &[((1, 0), alpha)]).unwrap());
        let a = ApertureIndex::new(3, 3);
        let s = aperture_centroid_spectrum(&cfg, &screen, a, &SpectrumOptions::default()).unwrap();
        assert!((s.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let (imax, jmax) = {
            let k = s.weights.iter().enumerate().max_by(|x, y| x.1.total_cmp(y.1)).unwrap().0;
            (k % s.width, k / s.width)
        };
        let peak = cfg.half_res_center(s.origin.0 + imax as i64, s.origin.1 + jmax as i64);
        let c = cfg.aperture_center(a).unwrap();
        let expect = cfg.gradient_to_displacement(kappa);
        assert!((peak.x - c.x - expect).abs() <= cfg.sensor_pixel / 2.0, "{} vs {}", peak.x - c.x, expect);
        assert!((peak.y - c.y).abs() < 1e-12);
    }

    #[test]
    fn centroid_main_lobe_is_half_the_classical_width() {
        let cfg = OpticalConfig::default();
        let k = cfg.wave_number();
        let xs: Vec<f64> = (-400..=400).map(|i| i as f64 * 0.1e-6).collect();
        let a = cfg.aperture_pitch / 2.0;
        let cent = focal_spectrum(|_| 0.0, a, 2.0, 2.0 * k / cfg.f_sh, 128, &xs, &[0.0]);
        let class = focal_spectrum(|_| 0.0, a, 1.0, k / cfg.f_sh, 128, &xs, &[0.0]);
        let wc = profile_fwhm(&cent, 0.1e-6).unwrap();
        let w1 = profile_fwhm(&class, 0.1e-6).unwrap();
        // sinc² FWHM = 0.8859 λ f / pitch
        let expect = 0.885_893 * cfg.wavelength * cfg.f_sh / cfg.aperture_pitch;
        assert!((w1 - expect).abs() < 0.01 * expect, "{w1} vs {expect}");
        assert!((wc / w1 - 0.5).abs() < 0.01, "{wc} / {w1}");
    }

    #[test]
    fn raster_must_cover_aperture() {
        let cfg = OpticalConfig {
            rescale_halfwidth: 0.5e-3,
            ..Default::default()
        };
        let screen = PhaseScreen::raster(crate::grid::Grid::zeros(4, 4));
        let err = aperture_centroid_spectrum(&cfg, &screen, ApertureIndex::new(0, 0), &SpectrumOptions::default());
        assert!(matches!(err, Err(Error::Domain(_))));
        let ok = aperture_centroid_spectrum(&cfg, &screen, ApertureIndex::new(3, 3), &SpectrumOptions::default());
        assert!(ok.is_ok());
    }
}
