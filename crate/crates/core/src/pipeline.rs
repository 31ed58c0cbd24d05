//! End-to-end runs: simulated frames into statistics, statistics into
//! gradients and coefficients, and the closed correction loop.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::frame::BitFrame;
use crate::geometry::OpticalConfig;
use crate::jpd::{centroid_marginal, AccumulateOptions, Accumulator, CentroidMap, CoincidenceStats, SmearRule};
use crate::legendre::{rmse_waves, LegendreCoeffs, PhaseRaster, DEFAULT_MAX_DEGREE, DEFAULT_RASTER_SIZE};
use crate::shws::{measure_gradients, reconstruct, subtract_reference, GradientField, Quality, Reconstruction};
use crate::simulate::{simulate_batch, DetectorModel, FrameSource, PhaseScreen};

const BATCH: u64 = 512;

/// Accumulates `n` simulated frames without materializing them. `on_prefix`
/// runs on the statistics of the first `k` frames for every `k` in
/// `prefixes` (ascending, each ≤ `n`).
pub fn accumulate_simulated<S: FrameSource + ?Sized>(
    src: &S,
    det: &DetectorModel,
    n: u64,
    seed: u64,
    opts: &AccumulateOptions,
    prefixes: &[u64],
    mut on_prefix: impl FnMut(u64, &CoincidenceStats) -> Result<()>,
) -> Result<CoincidenceStats> {
    if n == 0 {
        return Err(Error::domain("frame count must be at least 1"));
    }
    det.validate()?;
    if prefixes.windows(2).any(|w| w[0] >= w[1]) || prefixes.iter().any(|&k| k == 0 || k > n) {
        return Err(Error::domain("prefix sizes must be ascending, nonzero and at most the frame count"));
    }
    let (w, h) = src.detector_geometry().roi_pixels;
    let mut acc = Accumulator::new(w, h, opts)?;
    let mut next = prefixes.iter().copied().peekable();
    let mut start = 0;
    while start < n {
        let mut end = (start + BATCH).min(n);
        if let Some(&k) = next.peek() {
            end = end.min(k);
        }
        for f in simulate_batch(src, det, seed, start, end) {
            acc.push(&f)?;
        }
        start = end;
        if next.peek() == Some(&start) {
            next.next();
            on_prefix(start, acc.snapshot())?;
        }
    }
    Ok(acc.finish())
}

/// Same as [`accumulate_simulated`] without prefix callbacks.
pub fn simulate_stats<S: FrameSource + ?Sized>(
    src: &S,
    det: &DetectorModel,
    n: u64,
    seed: u64,
    opts: &AccumulateOptions,
) -> Result<CoincidenceStats> {
    accumulate_simulated(src, det, n, seed, opts, &[], |_, _| Ok(()))
}

/// Accumulates frames from any source, e.g. a frame file.
pub fn accumulate_frames<I>(frames: I, width: usize, height: usize, opts: &AccumulateOptions, prefixes: &[u64], mut on_prefix: impl FnMut(u64, &CoincidenceStats) -> Result<()>) -> Result<CoincidenceStats>
where
    I: IntoIterator<Item = Result<BitFrame>>,
{
    let mut acc = Accumulator::new(width, height, opts)?;
    let mut next = prefixes.iter().copied().peekable();
    for f in frames {
        acc.push(&f?)?;
        if next.peek() == Some(&acc.frames_seen()) {
            next.next();
            on_prefix(acc.frames_seen(), acc.snapshot())?;
        }
    }
    if acc.frames_seen() == 0 {
        return Err(Error::domain("no frames to accumulate"));
    }
    if let Some(k) = next.next() {
        return Err(Error::domain(format!("requested prefix of {k} frames, only {} available", acc.frames_seen())));
    }
    Ok(acc.finish())
}

/// Centroid map before and after background removal, and the gradients
/// measured on the latter.
#[derive(Debug, Clone)]
pub struct Measurement {
    pub raw: CentroidMap,
    pub map: CentroidMap,
    pub gradients: GradientField,
}

pub fn measure(stats: &CoincidenceStats, cfg: &OpticalConfig, rule: SmearRule) -> Result<Measurement> {
    if (stats.width(), stats.height()) != cfg.roi_pixels {
        return Err(Error::domain(format!(
            "statistics cover {}x{} pixels, configuration ROI is {}x{}",
            stats.width(),
            stats.height(),
            cfg.roi_pixels.0,
            cfg.roi_pixels.1
        )));
    }
    let raw = centroid_marginal(stats, rule)?;
    let map = raw.without_background();
    let gradients = measure_gradients(&map.map, cfg)?;
    Ok(Measurement { raw, map, gradients })
}

/// Result of one reconstruction, with optional comparison to a known phase.
#[derive(Debug, Clone)]
pub struct Report {
    pub frames: u64,
    pub reference: Option<String>,
    pub gradients: GradientField,
    pub reconstruction: Reconstruction,
    /// RMSE in waves against the truth, piston and tilt excluded.
    pub rmse_waves: Option<f64>,
}

impl Report {
    pub fn coeffs(&self) -> &LegendreCoeffs {
        &self.reconstruction.solution.coeffs
    }

    /// Key-value block followed by the coefficient table.
    pub fn to_text(&self) -> String {
        let g = &self.gradients;
        let mut s = String::new();
        let _ = writeln!(s, "frames = {}", self.frames);
        let _ = writeln!(s, "reference = {}", self.reference.as_deref().unwrap_or("none"));
        let _ = writeln!(s, "apertures_ok = {}", g.count(Quality::Ok));
        let _ = writeln!(s, "apertures_out_of_range = {}", g.count(Quality::OutOfRange));
        let _ = writeln!(s, "apertures_no_peak = {}", g.count(Quality::NoPeak));
        let _ = writeln!(s, "flags = {}", g.flag_summary());
        let _ = writeln!(s, "residual = {:.17e}", self.reconstruction.solution.residual);
        if let Some(r) = self.rmse_waves {
            let _ = writeln!(s, "rmse_waves = {r:.6}");
        }
        s.push('\n');
        s.push_str(&self.coeffs().to_table());
        s
    }
}

/// Reconstructs a measured field, optionally reference-subtracted, and
/// compares it with `truth` when given.
pub fn reconstruct_report(
    cfg: &OpticalConfig,
    frames: u64,
    field: &GradientField,
    reference: Option<(&str, &GradientField)>,
    truth: Option<&PhaseRaster>,
) -> Result<Report> {
    let gradients = match reference {
        Some((_, r)) => subtract_reference(field, r)?,
        None => field.clone(),
    };
    let reconstruction = reconstruct(&gradients, cfg, DEFAULT_MAX_DEGREE)?;
    let rmse_waves = truth.map(|t| rmse_waves(&reconstruction.raster, t, true)).transpose()?;
    Ok(Report {
        frames,
        reference: reference.map(|(name, _)| name.to_string()),
        gradients,
        reconstruction,
        rmse_waves,
    })
}

/// `screen − Φ̂`, optionally without the tilt modes of `Φ̂`.
pub fn corrected_screen(screen: &PhaseScreen, estimate: &LegendreCoeffs, keep_tilt: bool) -> Result<PhaseScreen> {
    let e = if keep_tilt { estimate.clone() } else { estimate.without_tilt() };
    screen.plus_modal(&e.scaled(-1.0))
}

/// Residual phase RMSE (waves, piston and tilt excluded) of a screen on the
/// default raster.
pub fn screen_rmse(screen: &PhaseScreen) -> Result<f64> {
    let r = screen.rasterize(DEFAULT_RASTER_SIZE)?;
    let zero = PhaseRaster::from_values(DEFAULT_RASTER_SIZE, vec![0.0; DEFAULT_RASTER_SIZE * DEFAULT_RASTER_SIZE])?;
    rmse_waves(&r, &zero, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jpd::accumulate;
    use crate::simulate::{simulate_frames, CorrelationKernel, PairSampler};

    fn small() -> (OpticalConfig, PairSampler, DetectorModel) {
        let cfg = OpticalConfig {
            roi_pixels: (60, 40),
            aperture_grid: (2, 1),
            ..OpticalConfig::default()
        };
        let cfg = OpticalConfig {
            roi_origin: crate::geometry::centered_origin(cfg.roi_pixels, cfg.sensor_pixel),
            ..cfg
        };
        let k = CorrelationKernel { spot_fwhm: 100e-6, ..Default::default() };
        let s = PairSampler::new(&cfg, &PhaseScreen::zero(), &k).unwrap();
        let det = DetectorModel { pairs_per_frame: 40.0, ..DetectorModel::default() };
        (cfg, s, det)
    }

    #[test]
    fn prefixes_match_separate_runs() {
        let (_, s, det) = small();
        let opts = AccumulateOptions::with_window(6);
        let mut seen = Vec::new();
        let full = accumulate_simulated(&s, &det, 1200, 4, &opts, &[100, 700], |k, st| {
            seen.push((k, st.clone()));
            Ok(())
        })
        .unwrap();
        assert_eq!(seen.len(), 2);
        for (k, st) in seen {
            let direct = accumulate(simulate_frames(&s, &det, k, 4).unwrap().map(Ok), 60, 40, &opts).unwrap();
            assert_eq!(st, direct);
        }
        let direct = accumulate(simulate_frames(&s, &det, 1200, 4).unwrap().map(Ok), 60, 40, &opts).unwrap();
        assert_eq!(full, direct);
        assert!(accumulate_simulated(&s, &det, 10, 4, &opts, &[20], |_, _| Ok(())).is_err());
    }

    #[test]
    fn frame_prefixes_require_enough_frames() {
        let (_, s, det) = small();
        let frames: Vec<BitFrame> = simulate_frames(&s, &det, 5, 1).unwrap().collect();
        let opts = AccumulateOptions::with_window(4);
        let r = accumulate_frames(frames.into_iter().map(Ok), 60, 40, &opts, &[3, 9], |_, _| Ok(()));
        assert!(matches!(r, Err(Error::Domain(_))));
    }

    #[test]
    fn correction_cancels_modal_screen() {
        let truth = crate::simulate::preset_eq7();
        let s = PhaseScreen::modal(truth.clone());
        let c = corrected_screen(&s, &truth, true).unwrap();
        assert!(screen_rmse(&c).unwrap() < 1e-12);
        let no_tilt = corrected_screen(&s, &truth, false).unwrap();
        assert!(screen_rmse(&no_tilt).unwrap() < 1e-12);
        assert!(screen_rmse(&s).unwrap() > 0.1);
    }
}
