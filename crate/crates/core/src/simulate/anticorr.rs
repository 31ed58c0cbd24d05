use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, WeightedAliasIndex};

use super::sampler::FrameSource;
use super::spectrum::{check_screen_covers, focal_spectrum, input_samples, SpectrumOptions};
use super::{CorrelationKernel, PhaseScreen, SeparationSampler};
use crate::error::{Error, Result};
use crate::geometry::{OpticalConfig, Point2};

struct AperturePair {
    center: Point2,
    mirror: Point2,
    weights: WeightedAliasIndex<f64>,
}

/// Pair source for perfectly anti-correlated photons mirrored about
/// `symmetry_center`. The position difference behind aperture pair
/// `(a, mirror(a))` follows the single-photon spectrum of the even effective
/// phase `Φ(c + ρ) + Φ(c' - ρ)`; the pair's common-mode offset follows the
/// kernel spot profile.
pub struct AntiCorrelatedSampler {
    cfg: OpticalConfig,
    pairs: Vec<AperturePair>,
    cells: usize,
    step: f64,
    common: SeparationSampler,
}

impl AntiCorrelatedSampler {
    pub fn new(
        cfg: &OpticalConfig,
        screen: &PhaseScreen,
        kernel: &CorrelationKernel,
        symmetry_center: Point2,
    ) -> Result<Self> {
        cfg.validate()?;
        kernel.validate(cfg)?;
        let opts = SpectrumOptions::default();
        let step = cfg.sensor_pixel / 2.0;
        let half = (cfg.aperture_pitch / step).ceil() as usize;
        let cells = 2 * half + 1;
        let s = opts.subcells;
        let offsets: Vec<f64> = (0..cells)
            .flat_map(|i| {
                let c = (i as f64 - half as f64) * step;
                (0..s).map(move |k| c + ((k as f64 + 0.5) / s as f64 - 0.5) * step)
            })
            .collect();
        let q_per_x = cfg.wave_number() / cfg.f_sh;
        let mut pairs = Vec::new();
        for a in cfg.apertures() {
            check_screen_covers(cfg, screen, a)?;
            let c = cfg.aperture_center(a)?;
            let mirror = symmetry_center * 2.0 - c;
            let b = cfg.aperture_of(mirror).ok_or_else(|| {
                Error::domain(format!("aperture {a} has no mirror aperture about the symmetry center"))
            })?;
            if (cfg.aperture_center(b)? - mirror).norm() > 1e-9 * cfg.aperture_pitch {
                return Err(Error::domain(
                    "symmetry center must be an aperture center, side midpoint or vertex",
                ));
            }
            let phase = |rho: Point2| screen.phase_at(cfg, c + rho) + screen.phase_at(cfg, mirror - rho);
            let fine = focal_spectrum(phase, cfg.aperture_pitch / 2.0, 1.0, q_per_x, input_samples(cfg, &opts), &offsets, &offsets);
            let mut w = vec![0.0; cells * cells];
            let fw = cells * s;
            for (r, row) in fine.chunks_exact(fw).enumerate() {
                for (col, v) in row.iter().enumerate() {
                    w[(r / s) * cells + col / s] += v;
                }
            }
            let weights = WeightedAliasIndex::new(w).map_err(|e| Error::domain(format!("degenerate spectrum: {e}")))?;
            pairs.push(AperturePair { center: c, mirror, weights });
        }
        Ok(AntiCorrelatedSampler {
            cfg: cfg.clone(),
            pairs,
            cells,
            step,
            common: kernel.half_separation_sampler(),
        })
    }
}

impl FrameSource for AntiCorrelatedSampler {
    fn detector_geometry(&self) -> &OpticalConfig {
        &self.cfg
    }

    fn sample_pair(&self, rng: &mut ChaCha8Rng) -> (Point2, Point2) {
        let p = &self.pairs[rng.gen_range(0..self.pairs.len())];
        let k = p.weights.sample(rng);
        let half = (self.cells / 2) as f64;
        let jx: f64 = rng.gen::<f64>() - 0.5;
        let jy: f64 = rng.gen::<f64>() - 0.5;
        let d = Point2::new(
            ((k % self.cells) as f64 - half + jx) * self.step,
            ((k / self.cells) as f64 - half + jy) * self.step,
        );
        let m = self.common.sample(rng);
        (p.center + d * 0.5 + m, p.mirror - d * 0.5 + m)
    }
}
