use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::geometry::OpticalConfig;
use crate::grid::Grid;

/// Random phase film as a raster over the normalized [-1, 1]² square.
///
/// White Gaussian noise is filtered with `exp(-2 r²/ℓ²)`, which gives the
/// film the autocorrelation `exp(-r²/ℓ²)` for correlation length `ℓ`
/// (physical meters). The result has zero mean and RMS `rms` radians over the
/// raster.
pub fn film_raster(cfg: &OpticalConfig, rms: f64, correlation_length: f64, size: usize, seed: u64) -> Result<Grid> {
    if !(rms >= 0.0 && rms.is_finite()) {
        return Err(Error::domain("film RMS must be finite and nonnegative"));
    }
    if !(correlation_length > 0.0) {
        return Err(Error::domain("film correlation length must be positive"));
    }
    if size < 2 {
        return Err(Error::domain("film raster must be at least 2x2"));
    }
    let spacing = 2.0 * cfg.rescale_halfwidth / size as f64;
    let sigma = correlation_length / 2.0 / spacing;
    let radius = (3.5 * sigma).ceil() as usize;
    let kernel: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let n = size + 2 * radius;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise: Vec<f64> = (0..n * n).map(|_| StandardNormal.sample(&mut rng)).collect();

    // rows: n x n -> n rows x size cols
    let mut tmp = vec![0.0; n * size];
    for y in 0..n {
        for x in 0..size {
            let row = &noise[y * n + x..y * n + x + kernel.len()];
            tmp[y * size + x] = row.iter().zip(&kernel).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; size * size];
    for y in 0..size {
        for x in 0..size {
            out[y * size + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * tmp[(y + k) * size + x])
                .sum();
        }
    }
    let mean = out.iter().sum::<f64>() / out.len() as f64;
    let var = out.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / out.len() as f64;
    let scale = if var > 0.0 { rms / var.sqrt() } else { 0.0 };
    out.iter_mut().for_each(|v| *v = (*v - mean) * scale);
    Grid::from_values(size, size, out)
}
