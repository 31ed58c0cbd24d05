use std::path::Path;

use anyhow::{Context, Result};
use pcb::config::parse_length;
use pcb::geometry::OpticalConfig;
use pcb::grid::read_grid;
use pcb::legendre::LegendreCoeffs;
use pcb::simulate::{film_raster, preset_eq7, preset_saddle, PhaseScreen};

use crate::{usage, ScreenArgs};

/// Film rasters are generated at this many samples per axis.
pub const FILM_RASTER_SIZE: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct FilmSpec {
    pub rms: f64,
    pub correlation_length: f64,
    pub seed: u64,
}

/// Parses `film(RMS, CORR_LEN, SEED)`; the length takes a unit suffix.
pub fn parse_film(spec: &str) -> Result<FilmSpec> {
    let inner = spec
        .trim()
        .strip_prefix("film(")
        .and_then(|s| s.strip_suffix(')'))
        .ok_or_else(|| usage(format!("malformed film preset {spec:?}, expected film(RMS, CORR_LEN, SEED)")))?;
    let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(usage(format!("film preset needs three arguments, got {}", parts.len())));
    }
    let rms = parts[0].parse::<f64>().map_err(|_| usage(format!("film rms {:?} is not a number", parts[0])))?;
    let correlation_length = parse_length(parts[1]).map_err(|m| usage(format!("film correlation length: {m}")))?;
    let seed = parts[2].parse::<u64>().map_err(|_| usage(format!("film seed {:?} is not an integer", parts[2])))?;
    Ok(FilmSpec {
        rms,
        correlation_length,
        seed,
    })
}

pub fn preset(name: &str, cfg: &OpticalConfig) -> Result<PhaseScreen> {
    match name.trim() {
        "none" | "zero" => Ok(PhaseScreen::zero()),
        "saddle" => Ok(PhaseScreen::modal(preset_saddle())),
        "eq7" => Ok(PhaseScreen::modal(preset_eq7())),
        s if s.starts_with("film(") => {
            let f = parse_film(s)?;
            let g = film_raster(cfg, f.rms, f.correlation_length, FILM_RASTER_SIZE, f.seed)?;
            Ok(PhaseScreen::raster(g))
        }
        other => Err(usage(format!("unknown preset {other:?}; known: none, saddle, eq7, film(RMS, CORR_LEN, SEED)"))),
    }
}

pub fn load_coeffs(path: &Path) -> Result<LegendreCoeffs> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading coefficients {}", path.display()))?;
    Ok(LegendreCoeffs::parse_table(&text).with_context(|| format!("parsing {}", path.display()))?)
}

/// The screen named by the flags, or `None` when no flag was given.
pub fn from_args(args: &ScreenArgs, cfg: &OpticalConfig) -> Result<Option<PhaseScreen>> {
    if let Some(p) = &args.preset {
        return preset(p, cfg).map(Some);
    }
    if let Some(path) = &args.coeffs {
        return Ok(Some(PhaseScreen::modal(load_coeffs(path)?)));
    }
    if let Some(path) = &args.raster {
        let g = read_grid(path).with_context(|| format!("reading raster {}", path.display()))?;
        return Ok(Some(PhaseScreen::raster(g)));
    }
    Ok(None)
}

/// Paths read by the screen flags, for the manifest.
pub fn input_paths(args: &ScreenArgs) -> Vec<&Path> {
    args.coeffs.iter().chain(args.raster.iter()).map(|p| p.as_path()).collect()
}
