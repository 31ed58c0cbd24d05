use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, WeightedAliasIndex};
use rayon::prelude::*;

use super::spectrum::{all_spectra, CentroidSpectrum, SpectrumOptions};
use super::{CorrelationKernel, DetectorModel, PhaseScreen, SeparationSampler};
use crate::error::{Error, Result};
use crate::frame::BitFrame;
use crate::geometry::{ApertureIndex, OpticalConfig, Point2};

/// Anything that draws photon pairs in the detector plane.
pub trait FrameSource: Sync {
    /// Geometry used to bin photon positions into ROI pixels.
    fn detector_geometry(&self) -> &OpticalConfig;
    fn sample_pair(&self, rng: &mut ChaCha8Rng) -> (Point2, Point2);
}

/// Pair generator for the correlation-mode sensor.
#[derive(Debug, Clone)]
pub struct PairSampler {
    cfg: OpticalConfig,
    spectra: Vec<CentroidSpectrum>,
    cells: Vec<WeightedAliasIndex<f64>>,
    apertures: WeightedAliasIndex<f64>,
    separation: SeparationSampler,
}

impl PairSampler {
    /// Uniform illumination of every aperture.
    pub fn new(cfg: &OpticalConfig, screen: &PhaseScreen, kernel: &CorrelationKernel) -> Result<Self> {
        Self::with_options(cfg, screen, kernel, &SpectrumOptions::default())
    }

    pub fn with_options(
        cfg: &OpticalConfig,
        screen: &PhaseScreen,
        kernel: &CorrelationKernel,
        opts: &SpectrumOptions,
    ) -> Result<Self> {
        cfg.validate()?;
        kernel.validate(cfg)?;
        let spectra = all_spectra(cfg, screen, opts)?;
        Self::from_spectra(cfg, spectra, vec![1.0; cfg.aperture_count()], kernel)
    }

    pub fn from_spectra(
        cfg: &OpticalConfig,
        spectra: Vec<CentroidSpectrum>,
        aperture_weights: Vec<f64>,
        kernel: &CorrelationKernel,
    ) -> Result<Self> {
        let alias = |w: Vec<f64>| {
            WeightedAliasIndex::new(w).map_err(|e| Error::domain(format!("invalid sampling weights: {e}")))
        };
        let cells = spectra
            .iter()
            .map(|s| alias(s.weights.clone()))
            .collect::<Result<Vec<_>>>()?;
        Ok(PairSampler {
            cfg: cfg.clone(),
            spectra,
            cells,
            apertures: alias(aperture_weights)?,
            separation: kernel.half_separation_sampler(),
        })
    }

    pub fn spectra(&self) -> &[CentroidSpectrum] {
        &self.spectra
    }

    /// A pair centroid, uniform within the sampled cell, and the aperture it
    /// passed through.
    pub fn sample_centroid<R: Rng + ?Sized>(&self, rng: &mut R) -> (ApertureIndex, Point2) {
        let a = self.apertures.sample(rng);
        let s = &self.spectra[a];
        let k = self.cells[a].sample(rng);
        let (i, j) = ((k % s.width) as i64, (k / s.width) as i64);
        let c = self.cfg.half_res_center(s.origin.0 + i, s.origin.1 + j);
        let step = self.cfg.sensor_pixel / 2.0;
        let jx: f64 = rng.gen::<f64>() - 0.5;
        let jy: f64 = rng.gen::<f64>() - 0.5;
        (s.aperture, Point2::new(c.x + jx * step, c.y + jy * step))
    }
}

impl FrameSource for PairSampler {
    fn detector_geometry(&self) -> &OpticalConfig {
        &self.cfg
    }

    fn sample_pair(&self, rng: &mut ChaCha8Rng) -> (Point2, Point2) {
        let (_, c) = self.sample_centroid(rng);
        let h = self.separation.sample(rng);
        (c + h, c - h)
    }
}

/// Deterministic generator for frame `index` of a run seeded with `seed`.
pub fn frame_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map(|d| d.sample(rng) as u64).unwrap_or(0)
}

fn hit<R: Rng + ?Sized>(cfg: &OpticalConfig, p: Point2, smear: f64, out: &mut BitFrame, rng: &mut R) {
    if let Some(px) = cfg.pixel_of(p) {
        out.set(px.x, px.y);
        if smear > 0.0 && px.x + 1 < out.width() && rng.gen::<f64>() < smear {
            out.set(px.x + 1, px.y);
        }
    }
}

/// Renders one thresholded frame into `out`.
///
/// Detection is thinned in Poisson form: pairs with both photons detected and
/// pairs with exactly one detected photon are drawn as independent Poisson
/// counts, which has the same distribution as per-photon survival trials.
pub fn render_frame<S: FrameSource + ?Sized>(src: &S, det: &DetectorModel, rng: &mut ChaCha8Rng, out: &mut BitFrame) {
    let cfg = src.detector_geometry();
    out.clear();
    let mut rate = det.pairs_per_frame;
    if det.rate_drift > 0.0 {
        rate *= 1.0 + det.rate_drift * (2.0 * rng.gen::<f64>() - 1.0);
    }
    let eta = det.quantum_efficiency;
    let both = poisson(rate * eta * eta, rng);
    let single = poisson(rate * 2.0 * eta * (1.0 - eta), rng);
    for _ in 0..both {
        let (p1, p2) = src.sample_pair(rng);
        hit(cfg, p1, det.smear_prob, out, rng);
        hit(cfg, p2, det.smear_prob, out, rng);
    }
    for _ in 0..single {
        let (p1, p2) = src.sample_pair(rng);
        let p = if rng.gen::<bool>() { p1 } else { p2 };
        hit(cfg, p, det.smear_prob, out, rng);
    }
    add_dark_counts(det.dark_count_prob, out, rng);
}

fn add_dark_counts<R: Rng + ?Sized>(p: f64, out: &mut BitFrame, rng: &mut R) {
    if p <= 0.0 {
        return;
    }
    let (w, h) = (out.width(), out.height());
    let n = w * h;
    if p >= 1.0 {
        out.fill();
        return;
    }
    let log_q = (1.0 - p).ln();
    let mut i = 0usize;
    loop {
        let u: f64 = 1.0 - rng.gen::<f64>();
        let skip = (u.ln() / log_q).floor();
        if skip >= (n - i) as f64 {
            break;
        }
        i += skip as usize;
        out.set(i % w, i / w);
        i += 1;
        if i >= n {
            break;
        }
    }
}

/// Frames `start..end` of a run, rendered in parallel.
pub fn simulate_batch<S: FrameSource + ?Sized>(
    src: &S,
    det: &DetectorModel,
    seed: u64,
    start: u64,
    end: u64,
) -> Vec<BitFrame> {
    let (w, h) = src.detector_geometry().roi_pixels;
    (start..end)
        .into_par_iter()
        .map(|i| {
            let mut f = BitFrame::new(w, h);
            render_frame(src, det, &mut frame_rng(seed, i), &mut f);
            f
        })
        .collect()
}

/// Lazily rendered, reproducible frame sequence.
pub struct FrameStream<'a, S: FrameSource + ?Sized> {
    src: &'a S,
    det: DetectorModel,
    seed: u64,
    next: u64,
    end: u64,
}

impl<S: FrameSource + ?Sized> Iterator for FrameStream<'_, S> {
    type Item = BitFrame;

    fn next(&mut self) -> Option<BitFrame> {
        if self.next >= self.end {
            return None;
        }
        let (w, h) = self.src.detector_geometry().roi_pixels;
        let mut f = BitFrame::new(w, h);
        render_frame(self.src, &self.det, &mut frame_rng(self.seed, self.next), &mut f);
        self.next += 1;
        Some(f)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = (self.end - self.next) as usize;
        (n, Some(n))
    }
}

pub fn simulate_frames<'a, S: FrameSource + ?Sized>(
    src: &'a S,
    det: &DetectorModel,
    count: u64,
    seed: u64,
) -> Result<FrameStream<'a, S>> {
    det.validate()?;
    Ok(FrameStream {
        src,
        det: *det,
        seed,
        next: 0,
        end: count,
    })
}
