use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, WeightedAliasIndex};
use rustfft::FftPlanner;

use super::sampler::FrameSource;
use super::{DetectorModel, PhaseScreen};
use crate::config::ConfigDoc;
use crate::error::{Error, Result};
use crate::geometry::{centered_origin, OpticalConfig, Point2};
use crate::grid::Grid;

/// Image-plane geometry of the adaptive-imaging setup.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagingConfig {
    pub wavelength: f64,
    /// Binned pixel width.
    pub pixel: f64,
    pub roi_pixels: (usize, usize),
    /// Anti-correlation center in doubled pixel coordinates, so half-pixel
    /// centers are representable.
    pub symmetry_center2: (i64, i64),
    /// FWHM of the Gaussian pair-center envelope `|c̃|²` in the image plane.
    pub beam_fwhm: f64,
    /// Focal length mapping pupil momentum onto the image plane.
    pub focal_length: f64,
    /// Physical half-width of the square pupil carrying the phase screen.
    pub pupil_halfwidth: f64,
    /// Pupil samples per axis for the PSF transform.
    pub pupil_samples: usize,
    pub fft_size: usize,
    /// Mean pairs per frame; replaces the detector's rate in imaging runs.
    pub pairs_per_frame: f64,
}

impl Default for ImagingConfig {
    fn default() -> Self {
        let roi_pixels = (105, 71);
        ImagingConfig {
            wavelength: 808e-9,
            pixel: 26e-6,
            roi_pixels,
            symmetry_center2: (roi_pixels.0 as i64 - 1, roi_pixels.1 as i64 - 1),
            beam_fwhm: 2.4e-3,
            focal_length: 60e-3,
            pupil_halfwidth: 1.05e-3,
            pupil_samples: 64,
            fft_size: 256,
            pairs_per_frame: 2200.0,
        }
    }
}

impl ImagingConfig {
    pub fn from_doc(doc: &ConfigDoc) -> Result<Self> {
        let mut c = ImagingConfig::default();
        if let Some(v) = doc.length("wavelength")? {
            c.wavelength = v;
        }
        if let Some(v) = doc.length("imaging_pixel")? {
            c.pixel = v;
        }
        if let Some(v) = doc.usize_pair("imaging_roi_pixels")? {
            c.roi_pixels = v;
            c.symmetry_center2 = (v.0 as i64 - 1, v.1 as i64 - 1);
        }
        if let Some((x, y)) = doc.usize_pair("imaging_symmetry_center2")? {
            c.symmetry_center2 = (x as i64, y as i64);
        }
        if let Some(v) = doc.length("imaging_beam_fwhm")? {
            c.beam_fwhm = v;
        }
        if let Some(v) = doc.length("imaging_focal_length")? {
            c.focal_length = v;
        }
        if let Some(v) = doc.length("rescale_halfwidth")? {
            c.pupil_halfwidth = v;
        }
        if let Some(v) = doc.f64("imaging_pairs_per_frame")? {
            c.pairs_per_frame = v;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("wavelength", self.wavelength),
            ("imaging_pixel", self.pixel),
            ("imaging_beam_fwhm", self.beam_fwhm),
            ("imaging_focal_length", self.focal_length),
            ("rescale_halfwidth", self.pupil_halfwidth),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::domain(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.pairs_per_frame >= 0.0 && self.pairs_per_frame.is_finite()) {
            return Err(Error::domain("imaging_pairs_per_frame must be finite and nonnegative"));
        }
        if self.roi_pixels.0 == 0 || self.roi_pixels.1 == 0 {
            return Err(Error::domain("imaging ROI must be nonempty"));
        }
        if self.pupil_samples < 4 || self.fft_size < 2 * self.pupil_samples {
            return Err(Error::domain("PSF transform needs at least 4 pupil samples and 2x zero padding"));
        }
        Ok(())
    }

    /// Detector geometry: ROI pixels centered on the optical axis.
    pub fn detector(&self) -> OpticalConfig {
        OpticalConfig {
            wavelength: self.wavelength,
            sensor_pixel: self.pixel,
            roi_pixels: self.roi_pixels,
            roi_origin: centered_origin(self.roi_pixels, self.pixel),
            ..OpticalConfig::default()
        }
    }

    /// `base` with the imaging pair rate.
    pub fn detector_model(&self, base: &DetectorModel) -> DetectorModel {
        DetectorModel {
            pairs_per_frame: self.pairs_per_frame,
            ..*base
        }
    }

    /// Point reflection of a pixel about the symmetry center.
    pub fn reflect(&self, x: i64, y: i64) -> (i64, i64) {
        (self.symmetry_center2.0 - x, self.symmetry_center2.1 - y)
    }

    fn center(&self) -> Point2 {
        let o = centered_origin(self.roi_pixels, self.pixel);
        Point2::new(
            o.x + self.symmetry_center2.0 as f64 * self.pixel / 2.0,
            o.y + self.symmetry_center2.1 as f64 * self.pixel / 2.0,
        )
    }
}

/// Object transmittance: open on one side of the symmetry center, vertical
/// bars of period `period` pixels on the other.
pub fn bar_mask(cfg: &ImagingConfig, period: usize) -> Grid {
    let (w, h) = cfg.roi_pixels;
    let mut g = Grid::zeros(w, h);
    let cx2 = cfg.symmetry_center2.0;
    for y in 0..h {
        for x in 0..w {
            let v = if 2 * (x as i64) >= cx2 {
                1.0
            } else if (x / (period / 2).max(1)) % 2 == 0 {
                1.0
            } else {
                0.0
            };
            g.set(x, y, v);
        }
    }
    g
}

/// Pair source for the imaging mode: anti-correlated pair centers weighted by
/// `|c̃(q) T(q) T(-q)|²`, each photon then blurred independently by the
/// point-spread function `|h|²` of the screen.
#[derive(Debug, Clone)]
pub struct ImagingSampler {
    cfg: ImagingConfig,
    detector: OpticalConfig,
    centers: WeightedAliasIndex<f64>,
    psf: WeightedAliasIndex<f64>,
    psf_step: f64,
    effective: Grid,
}

impl ImagingSampler {
    pub fn new(cfg: &ImagingConfig, mask: &Grid, screen: &PhaseScreen) -> Result<Self> {
        cfg.validate()?;
        screen.validate()?;
        if (mask.width(), mask.height()) != cfg.roi_pixels {
            return Err(Error::domain(format!(
                "object mask is {}x{}, imaging ROI is {}x{}",
                mask.width(),
                mask.height(),
                cfg.roi_pixels.0,
                cfg.roi_pixels.1
            )));
        }
        let effective = effective_image(cfg, mask);
        let centers = WeightedAliasIndex::new(effective.values().to_vec())
            .map_err(|e| Error::domain(format!("object mask blocks the whole beam: {e}")))?;
        let (psf, psf_step) = point_spread(cfg, screen)?;
        let psf = WeightedAliasIndex::new(psf).map_err(|e| Error::domain(format!("degenerate PSF: {e}")))?;
        Ok(ImagingSampler {
            cfg: cfg.clone(),
            detector: cfg.detector(),
            centers,
            psf,
            psf_step,
            effective,
        })
    }

    /// `|c̃(q) T(q) T(-q)|²` on the ROI pixels.
    pub fn effective_image(&self) -> &Grid {
        &self.effective
    }

    fn psf_offset(&self, rng: &mut ChaCha8Rng) -> Point2 {
        let n = self.cfg.fft_size;
        let k = self.psf.sample(rng);
        let (i, j) = ((k % n) as f64 - (n / 2) as f64, (k / n) as f64 - (n / 2) as f64);
        let jx: f64 = rng.gen::<f64>() - 0.5;
        let jy: f64 = rng.gen::<f64>() - 0.5;
        Point2::new((i + jx) * self.psf_step, (j + jy) * self.psf_step)
    }
}

fn effective_image(cfg: &ImagingConfig, mask: &Grid) -> Grid {
    let (w, h) = cfg.roi_pixels;
    let sigma = cfg.beam_fwhm / super::GAUSS_FWHM_PER_SIGMA;
    let mut g = Grid::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let (rx, ry) = cfg.reflect(x as i64, y as i64);
            let t_ref = mask.get_i(rx, ry).unwrap_or(0.0);
            let dx = (2 * x as i64 - cfg.symmetry_center2.0).abs() as f64 * cfg.pixel / 2.0;
            let dy = (2 * y as i64 - cfg.symmetry_center2.1).abs() as f64 * cfg.pixel / 2.0;
            let beam = (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
            let t = mask.get(x, y) * t_ref;
            g.set(x, y, beam * t * t);
        }
    }
    g
}

/// `|h|²` on an `fft_size`² grid centered at index `fft_size/2`, and its
/// image-plane sample spacing.
fn point_spread(cfg: &ImagingConfig, screen: &PhaseScreen) -> Result<(Vec<f64>, f64)> {
    let (np, n) = (cfg.pupil_samples, cfg.fft_size);
    let mut field = vec![Complex64::new(0.0, 0.0); n * n];
    for j in 0..np {
        for i in 0..np {
            let p = Point2::new(
                -1.0 + (2 * i + 1) as f64 / np as f64,
                -1.0 + (2 * j + 1) as f64 / np as f64,
            );
            field[j * n + i] = Complex64::cis(screen.eval_normalized(p));
        }
    }
    let fft = FftPlanner::new().plan_fft_forward(n);
    for row in field.chunks_exact_mut(n) {
        fft.process(row);
    }
    let mut col = vec![Complex64::new(0.0, 0.0); n];
    for x in 0..n {
        for y in 0..n {
            col[y] = field[y * n + x];
        }
        fft.process(&mut col);
        for y in 0..n {
            field[y * n + x] = col[y];
        }
    }
    // fftshift so zero frequency sits at n/2
    let mut psf = vec![0.0; n * n];
    for y in 0..n {
        for x in 0..n {
            let (sx, sy) = ((x + n / 2) % n, (y + n / 2) % n);
            psf[sy * n + sx] = field[y * n + x].norm_sqr();
        }
    }
    if psf.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("PSF is not finite"));
    }
    let d_rho = 2.0 * cfg.pupil_halfwidth / np as f64;
    let step = cfg.focal_length * cfg.wavelength / (n as f64 * d_rho);
    Ok((psf, step))
}

impl FrameSource for ImagingSampler {
    fn detector_geometry(&self) -> &OpticalConfig {
        &self.detector
    }

    fn sample_pair(&self, rng: &mut ChaCha8Rng) -> (Point2, Point2) {
        let w = self.cfg.roi_pixels.0;
        let k = self.centers.sample(rng);
        let (x, y) = ((k % w) as i64, (k / w) as i64);
        let jx: f64 = rng.gen::<f64>() - 0.5;
        let jy: f64 = rng.gen::<f64>() - 0.5;
        let p = self.detector.half_res_center(2 * x, 2 * y) + Point2::new(jx, jy) * self.cfg.pixel;
        let c = self.cfg.center();
        let mirror = c * 2.0 - p;
        (p + self.psf_offset(rng), mirror + self.psf_offset(rng))
    }
}
