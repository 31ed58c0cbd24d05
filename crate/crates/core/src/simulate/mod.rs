//! Forward model for synthetic biphoton coincidence frames.
//!
//! Pairs are sampled in factorized form: the centroid comes from the
//! per-aperture centroid spectrum `|FT[e^{2iΦ}]|²`, the separation comes
//! independently from the focal-plane image of the momentum correlation.

mod anticorr;
mod film;
mod imaging;
mod sampler;
mod spectrum;

pub use anticorr::AntiCorrelatedSampler;
pub use film::film_raster;
pub use imaging::{bar_mask, ImagingConfig, ImagingSampler};
pub use sampler::{frame_rng, render_frame, simulate_batch, simulate_frames, FrameSource, FrameStream, PairSampler};
pub use spectrum::{aperture_centroid_spectrum, focal_spectrum, CentroidSpectrum, SpectrumOptions};

use std::f64::consts::LN_2;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::config::ConfigDoc;
use crate::error::{Error, Result};
use crate::geometry::{OpticalConfig, Point2};
use crate::grid::Grid;
use crate::legendre::{LegendreCoeffs, PhaseRaster};

/// FWHM / sigma of a Gaussian.
pub(crate) const GAUSS_FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

/// Phase under test. The modal part lives on the normalized domain; the
/// raster part is a cell-centered grid over the same [-1, 1]² square,
/// bilinearly interpolated with edge clamping.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseScreen {
    pub modal: Option<LegendreCoeffs>,
    pub raster: Option<Grid>,
}

impl PhaseScreen {
    pub fn zero() -> Self {
        PhaseScreen {
            modal: Some(LegendreCoeffs::zeros(1)),
            raster: None,
        }
    }

    pub fn modal(coeffs: LegendreCoeffs) -> Self {
        PhaseScreen {
            modal: Some(coeffs),
            raster: None,
        }
    }

    pub fn raster(grid: Grid) -> Self {
        PhaseScreen {
            modal: None,
            raster: Some(grid),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.modal.is_none() && self.raster.is_none() {
            return Err(Error::domain("phase screen has neither a modal nor a raster part"));
        }
        if let Some(r) = &self.raster {
            if r.width() < 2 || r.height() < 2 {
                return Err(Error::domain("phase raster must be at least 2x2"));
            }
            if r.values().iter().any(|v| !v.is_finite()) {
                return Err(Error::domain("phase raster contains non-finite values"));
            }
        }
        Ok(())
    }

    /// Phase at a normalized point.
    pub fn eval_normalized(&self, p: Point2) -> f64 {
        let modal = self.modal.as_ref().map_or(0.0, |c| c.eval(p));
        let raster = self.raster.as_ref().map_or(0.0, |g| bilinear(g, p));
        modal + raster
    }

    /// Phase at a physical position in the microlens plane.
    pub fn phase_at(&self, cfg: &OpticalConfig, pos: Point2) -> f64 {
        self.eval_normalized(cfg.to_normalized_unchecked(pos))
    }

    /// Adds modal coefficients (e.g. a correction) to the screen.
    pub fn plus_modal(&self, extra: &LegendreCoeffs) -> Result<PhaseScreen> {
        let modal = match &self.modal {
            None => extra.clone(),
            Some(m) => {
                let d = m.max_degree().max(extra.max_degree());
                let mut sum = LegendreCoeffs::zeros(d);
                for ((a, b), v) in m.iter().chain(extra.iter()) {
                    let cur = sum.get(a, b);
                    sum.set(a, b, cur + v)?;
                }
                sum
            }
        };
        Ok(PhaseScreen {
            modal: Some(modal),
            raster: self.raster.clone(),
        })
    }

    pub fn rasterize(&self, n: usize) -> Result<PhaseRaster> {
        PhaseRaster::from_fn(n, |p| self.eval_normalized(p))
    }
}

fn bilinear(g: &Grid, p: Point2) -> f64 {
    let (w, h) = (g.width(), g.height());
    // cell i center at -1 + (2i+1)/w
    let fx = ((p.x + 1.0) * w as f64 / 2.0 - 0.5).clamp(0.0, (w - 1) as f64);
    let fy = ((p.y + 1.0) * h as f64 / 2.0 - 0.5).clamp(0.0, (h - 1) as f64);
    let (x0, y0) = (fx.floor() as usize, fy.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let (tx, ty) = (fx - x0 as f64, fy - y0 as f64);
    let top = g.get(x0, y0) * (1.0 - tx) + g.get(x1, y0) * tx;
    let bot = g.get(x0, y1) * (1.0 - tx) + g.get(x1, y1) * tx;
    top * (1.0 - ty) + bot * ty
}

/// Saddle `10 (L_{2,0} - L_{0,2})`.
pub fn preset_saddle() -> LegendreCoeffs {
    LegendreCoeffs::from_pairs(5, &[((2, 0), 10.0), ((0, 2), -10.0)]).expect("valid modes")
}

/// `8L20 + 6L11 - 7L02 + 4L30 - 5L21 - 4L12 + 3L03`.
pub fn preset_eq7() -> LegendreCoeffs {
    LegendreCoeffs::from_pairs(
        5,
        &[
            ((2, 0), 8.0),
            ((1, 1), 6.0),
            ((0, 2), -7.0),
            ((3, 0), 4.0),
            ((2, 1), -5.0),
            ((1, 2), -4.0),
            ((0, 3), 3.0),
        ],
    )
    .expect("valid modes")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    Gaussian,
    SincSquared,
}

/// Position correlation of the pair and the focal-plane spot it produces.
///
/// `position_fwhm` is the conditional (partner-given-photon) width at the
/// microlens plane. `spot_fwhm` is the single-photon spot width behind one
/// lenslet; the half-separation of a pair is drawn with this width so the
/// single-photon marginal reproduces it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationKernel {
    pub kind: KernelKind,
    pub position_fwhm: f64,
    pub spot_fwhm: f64,
}

impl Default for CorrelationKernel {
    fn default() -> Self {
        CorrelationKernel {
            kind: KernelKind::Gaussian,
            position_fwhm: 28e-6,
            spot_fwhm: 604e-6,
        }
    }
}

// sinc²(u) = 1/2 at u = 1.391557...
const SINC2_HALF_POINT: f64 = 1.391_557_377_628_359;

impl CorrelationKernel {
    pub fn from_doc(doc: &ConfigDoc) -> Result<Self> {
        let mut k = CorrelationKernel::default();
        if let Some(kind) = doc.string("kernel_kind") {
            k.kind = match kind.as_str() {
                "gaussian" => KernelKind::Gaussian,
                "sinc-squared" | "sinc2" => KernelKind::SincSquared,
                other => {
                    return Err(Error::Config {
                        line: 0,
                        message: format!("unknown kernel_kind {other:?}"),
                    })
                }
            };
        }
        if let Some(v) = doc.length("position_fwhm")? {
            k.position_fwhm = v;
        }
        if let Some(v) = doc.length("spot_fwhm")? {
            k.spot_fwhm = v;
        }
        Ok(k)
    }

    pub fn validate(&self, cfg: &OpticalConfig) -> Result<()> {
        if !(self.position_fwhm > 0.0 && self.position_fwhm < cfg.aperture_pitch / 2.0) {
            return Err(Error::domain(format!(
                "position_fwhm {} must be positive and well below the aperture pitch",
                self.position_fwhm
            )));
        }
        if !(self.spot_fwhm >= 0.0 && self.spot_fwhm.is_finite()) {
            return Err(Error::domain("spot_fwhm must be finite and nonnegative"));
        }
        Ok(())
    }

    pub(crate) fn half_separation_sampler(&self) -> SeparationSampler {
        if self.spot_fwhm == 0.0 {
            return SeparationSampler::None;
        }
        match self.kind {
            KernelKind::Gaussian => SeparationSampler::Gaussian {
                sigma: self.spot_fwhm / GAUSS_FWHM_PER_SIGMA,
            },
            KernelKind::SincSquared => SeparationSampler::radial_sinc2(self.spot_fwhm),
        }
    }
}

/// Draws a 2D offset with the focal-plane spot profile.
#[derive(Debug, Clone)]
pub(crate) enum SeparationSampler {
    None,
    Gaussian { sigma: f64 },
    /// Inverse CDF of the radius for `sinc²(β r²)`, tabulated.
    Radial { radii: Vec<f64> },
}

impl SeparationSampler {
    fn radial_sinc2(fwhm: f64) -> Self {
        let half = fwhm / 2.0;
        let beta = SINC2_HALF_POINT / (half * half);
        let r_max = 8.0 * fwhm;
        let n = 1 << 14;
        let dr = r_max / n as f64;
        let mut cdf = Vec::with_capacity(n + 1);
        cdf.push(0.0);
        let density = |r: f64| {
            let u = beta * r * r;
            let s = if u == 0.0 { 1.0 } else { u.sin() / u };
            r * s * s
        };
        let mut acc = 0.0;
        for i in 0..n {
            let r = (i as f64 + 0.5) * dr;
            acc += density(r) * dr;
            cdf.push(acc);
        }
        let total = acc;
        let table = 4096;
        let mut radii = Vec::with_capacity(table + 1);
        let mut j = 0;
        for t in 0..=table {
            let target = total * t as f64 / table as f64;
            while j < n && cdf[j + 1] < target {
                j += 1;
            }
            let (c0, c1) = (cdf[j], cdf[(j + 1).min(n)]);
            let frac = if c1 > c0 { (target - c0) / (c1 - c0) } else { 0.0 };
            radii.push((j as f64 + frac.clamp(0.0, 1.0)) * dr);
        }
        SeparationSampler::Radial { radii }
    }

    #[inline]
    pub(crate) fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Point2 {
        match self {
            SeparationSampler::None => Point2::ZERO,
            SeparationSampler::Gaussian { sigma } => {
                let x: f64 = StandardNormal.sample(rng);
                let y: f64 = StandardNormal.sample(rng);
                Point2::new(x * sigma, y * sigma)
            }
            SeparationSampler::Radial { radii } => {
                let u: f64 = rng.gen::<f64>() * (radii.len() - 1) as f64;
                let i = (u as usize).min(radii.len() - 2);
                let t = u - i as f64;
                let r = radii[i] * (1.0 - t) + radii[i + 1] * t;
                let phi: f64 = rng.gen::<f64>() * std::f64::consts::TAU;
                Point2::new(r * phi.cos(), r * phi.sin())
            }
        }
    }
}

/// Binarized EMCCD phenomenology.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorModel {
    pub quantum_efficiency: f64,
    /// Per-pixel per-frame probability of a spurious count.
    pub dark_count_prob: f64,
    /// Mean of the Poisson number of pairs per frame.
    pub pairs_per_frame: f64,
    /// Probability that a photon count also lights its right-hand neighbor.
    pub smear_prob: f64,
    /// Relative amplitude of a per-frame uniform rate modulation, in [0, 1).
    pub rate_drift: f64,
}

impl Default for DetectorModel {
    fn default() -> Self {
        DetectorModel {
            quantum_efficiency: 0.3,
            dark_count_prob: 0.02,
            pairs_per_frame: 10_500.0,
            smear_prob: 0.05,
            rate_drift: 0.0,
        }
    }
}

impl DetectorModel {
    pub fn from_doc(doc: &ConfigDoc) -> Result<Self> {
        let mut d = DetectorModel::default();
        if let Some(v) = doc.f64("quantum_efficiency")? {
            d.quantum_efficiency = v;
        }
        if let Some(v) = doc.f64("dark_count_prob")? {
            d.dark_count_prob = v;
        }
        if let Some(v) = doc.f64("pairs_per_frame")? {
            d.pairs_per_frame = v;
        }
        if let Some(v) = doc.f64("smear_prob")? {
            d.smear_prob = v;
        }
        if let Some(v) = doc.f64("rate_drift")? {
            d.rate_drift = v;
        }
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("quantum_efficiency", self.quantum_efficiency),
            ("dark_count_prob", self.dark_count_prob),
            ("smear_prob", self.smear_prob),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::domain(format!("{name} must be a probability, got {v}")));
            }
        }
        if !(self.pairs_per_frame >= 0.0 && self.pairs_per_frame.is_finite()) {
            return Err(Error::domain("pairs_per_frame must be finite and nonnegative"));
        }
        if !(0.0..1.0).contains(&self.rate_drift) {
            return Err(Error::domain("rate_drift must lie in [0, 1)"));
        }
        Ok(())
    }

    pub fn noiseless() -> Self {
        DetectorModel {
            quantum_efficiency: 1.0,
            dark_count_prob: 0.0,
            pairs_per_frame: 1.0,
            smear_prob: 0.0,
            rate_drift: 0.0,
        }
    }
}

/// Full width at half maximum of a sampled 1D profile by linear
/// interpolation between samples of spacing `dx`.
pub fn profile_fwhm(values: &[f64], dx: f64) -> Option<f64> {
    let (imax, &vmax) = values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))?;
    if vmax <= 0.0 {
        return None;
    }
    let half = vmax / 2.0;
    let mut left = None;
    for i in (0..imax).rev() {
        if values[i] < half {
            let t = (half - values[i]) / (values[i + 1] - values[i]);
            left = Some(i as f64 + t);
            break;
        }
    }
    let mut right = None;
    for i in imax + 1..values.len() {
        if values[i] < half {
            let t = (values[i - 1] - half) / (values[i - 1] - values[i]);
            right = Some((i - 1) as f64 + t);
            break;
        }
    }
    Some((right? - left?) * dx)
}

/// Gaussian FWHM for a given `1/e` correlation length, used by the film
/// generator documentation and tests.
pub fn gaussian_fwhm_from_sigma(sigma: f64) -> f64 {
    sigma * 2.0 * (2.0 * LN_2).sqrt()
}
