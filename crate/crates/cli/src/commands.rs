use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Parser;
use pcb::config::ConfigDoc;
use pcb::frame::{FrameReader, FrameWriter};
use pcb::geometry::{ApertureIndex, OpticalConfig, Pixel, Point2};
use pcb::grid::{normalized_cross_correlation, read_grid, write_grid, Grid};
use pcb::jpd::{
    anticorr_map, centroid_marginal, cpd, difference_marginal, direct_image, window_pixels, AccumulateOptions,
    CoincidenceStats, SmearRule,
};
use pcb::legendre::{PhaseRaster, DEFAULT_MAX_DEGREE, DEFAULT_RASTER_SIZE};
use pcb::pipeline::{
    accumulate_frames, corrected_screen, measure, reconstruct_report, screen_rmse, simulate_stats, Measurement,
};
use pcb::shws::{fit_power_law, peak_concentration, peak_fraction, reconstruct, snr, subtract_reference, GradientField};
use pcb::simulate::{
    bar_mask, simulate_batch, AntiCorrelatedSampler, CorrelationKernel, DetectorModel, FrameSource, ImagingConfig,
    ImagingSampler, PairSampler, PhaseScreen,
};

use crate::manifest::{replay_command, Manifest};
use crate::{screen, usage, Cli, Command, CorrectArgs, ImageArgs, ReconstructArgs, SimulateArgs, SnrArgs};

const DEFAULT_TRUNCATION: f64 = 300e-6;
const FRAME_BATCH: u64 = 512;

pub fn run(cli: Cli, raw: &[String]) -> Result<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("configuring the worker pool")?;
    }
    match cli.command {
        Command::Simulate(a) => simulate(a, raw),
        Command::Reconstruct(a) => reconstruct_cmd(a, raw),
        Command::Correct(a) => correct(a, raw),
        Command::Image(a) => image(a, raw),
        Command::Snr(a) => snr_cmd(a, raw),
        Command::Replay(a) => {
            let mut cmd = replay_command(&a.manifest)?;
            cmd.push("--out".into());
            cmd.push(a.out.display().to_string());
            let replayed = Cli::try_parse_from(&cmd).map_err(|e| usage(format!("recorded command no longer parses: {e}")))?;
            if matches!(replayed.command, Command::Replay(_)) {
                return Err(usage("manifest records a replay"));
            }
            run(Cli { threads: None, ..replayed }, &cmd[1..])
        }
    }
}

struct Setup {
    doc: ConfigDoc,
    config_path: Option<PathBuf>,
}

impl Setup {
    fn load(path: Option<&Path>) -> Result<Self> {
        let doc = match path {
            Some(p) => ConfigDoc::load(p).with_context(|| format!("loading config {}", p.display()))?,
            None => ConfigDoc::default(),
        };
        Ok(Setup {
            doc,
            config_path: path.map(Path::to_path_buf),
        })
    }

    fn optics(&self) -> Result<OpticalConfig> {
        Ok(OpticalConfig::from_doc(&self.doc)?)
    }

    fn imaging(&self) -> Result<ImagingConfig> {
        Ok(ImagingConfig::from_doc(&self.doc)?)
    }

    fn window(&self, pixel: f64, override_um: Option<f64>) -> Result<usize> {
        let t = match override_um {
            Some(um) if um > 0.0 && um.is_finite() => um * 1e-6,
            Some(um) => return Err(usage(format!("--window-um must be positive, got {um}"))),
            None => self.doc.length("truncation_length")?.unwrap_or(DEFAULT_TRUNCATION),
        };
        let w = window_pixels(t, pixel);
        if w == 0 {
            return Err(usage("truncation length is shorter than one pixel"));
        }
        Ok(w)
    }

    fn smear_rule(&self) -> Result<SmearRule> {
        Ok(match self.doc.u64("smear_limit")? {
            Some(0) => SmearRule::Off,
            Some(n) => SmearRule::Limit(n as usize),
            None => SmearRule::default(),
        })
    }

    fn manifest(&self, command: &str, raw: &[String], geometry: String) -> Manifest {
        let mut m = Manifest::new(command, raw);
        m.config = geometry;
        if let Some(p) = &self.config_path {
            m.inputs.push(p.clone());
        }
        m
    }
}

fn create_out(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating output directory {}", out.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn raster_grid(r: &PhaseRaster) -> Result<Grid> {
    Ok(Grid::from_values(r.size(), r.size(), r.values().to_vec())?)
}

fn open_frames(path: &Path, roi: (usize, usize)) -> Result<FrameReader> {
    let r = FrameReader::open(path).with_context(|| format!("reading frames {}", path.display()))?;
    let h = r.header();
    if (h.width as usize, h.height as usize) != roi {
        return Err(pcb::Error::domain(format!(
            "{} holds {}x{} frames, configuration ROI is {}x{}",
            path.display(),
            h.width,
            h.height,
            roi.0,
            roi.1
        ))
        .into());
    }
    Ok(r)
}

fn stats_from_file(path: &Path, roi: (usize, usize), opts: &AccumulateOptions) -> Result<CoincidenceStats> {
    let r = open_frames(path, roi)?;
    accumulate_frames(r, roi.0, roi.1, opts, &[], |_, _| Ok(())).with_context(|| format!("accumulating {}", path.display()))
}

fn measure_file(path: &Path, cfg: &OpticalConfig, opts: &AccumulateOptions, rule: SmearRule) -> Result<(u64, Measurement)> {
    let stats = stats_from_file(path, cfg.roi_pixels, opts)?;
    let m = measure(&stats, cfg, rule).with_context(|| format!("measuring gradients of {}", path.display()))?;
    Ok((stats.n_frames(), m))
}

fn coefficient_list(screen: &PhaseScreen) -> serde_json::Value {
    match &screen.modal {
        Some(c) => c
            .iter()
            .filter(|(_, v)| *v != 0.0)
            .map(|((m, n), v)| serde_json::json!([m, n, v]))
            .collect(),
        None => serde_json::Value::Null,
    }
}

fn write_frames<S: FrameSource + ?Sized>(src: &S, det: &DetectorModel, n: u64, seed: u64, path: &Path) -> Result<()> {
    let (w, h) = src.detector_geometry().roi_pixels;
    let mut out = FrameWriter::create(path, w, h)?;
    let mut start = 0;
    while start < n {
        let end = (start + FRAME_BATCH).min(n);
        for f in simulate_batch(src, det, seed, start, end) {
            out.write(&f)?;
        }
        start = end;
    }
    out.finish()?;
    Ok(())
}

fn simulate(a: SimulateArgs, raw: &[String]) -> Result<()> {
    if a.frames == 0 {
        return Err(usage("--frames must be at least 1"));
    }
    let setup = Setup::load(a.config.as_deref())?;
    let cfg = setup.optics()?;
    let kernel = CorrelationKernel::from_doc(&setup.doc)?;
    let det = DetectorModel::from_doc(&setup.doc)?;
    let scr = screen::from_args(&a.screen, &cfg)?.unwrap_or_else(PhaseScreen::zero);
    create_out(&a.out)?;
    let frames_path = a.out.join("frames.pcbf");
    let geometry = match a.mode.as_str() {
        "shws" => {
            let src = PairSampler::new(&cfg, &scr, &kernel).context("building centroid spectra")?;
            write_frames(&src, &det, a.frames, a.seed, &frames_path)?;
            cfg.to_doc_string()
        }
        "anticorr" => {
            let center = match setup.doc.length_pair("symmetry_center")? {
                Some((x, y)) => Point2::new(x, y),
                None => cfg.footprint_center(),
            };
            let src = AntiCorrelatedSampler::new(&cfg, &scr, &kernel, center)?;
            write_frames(&src, &det, a.frames, a.seed, &frames_path)?;
            cfg.to_doc_string()
        }
        "imaging" => {
            let icfg = setup.imaging()?;
            let period = setup.doc.u64("imaging_bar_period")?.unwrap_or(8) as usize;
            let mask = bar_mask(&icfg, period);
            let src = ImagingSampler::new(&icfg, &mask, &scr)?;
            write_frames(&src, &icfg.detector_model(&det), a.frames, a.seed, &frames_path)?;
            write_grid(&a.out.join("mask.pcbg"), &mask, &[("content", "object mask".into())])?;
            icfg.detector().to_doc_string()
        }
        other => return Err(usage(format!("unknown simulate mode {other:?}; known: shws, anticorr, imaging"))),
    };
    let mut m = setup.manifest("simulate", raw, geometry);
    m.seed = Some(a.seed);
    m.inputs.extend(screen::input_paths(&a.screen).into_iter().map(Path::to_path_buf));
    m.param("frames", a.frames);
    m.param("mode", a.mode.clone());
    m.param("preset", a.screen.preset.clone().unwrap_or_else(|| "none".into()));
    m.param("coefficients", coefficient_list(&scr));
    m.write(&a.out)
}

fn reconstruct_cmd(a: ReconstructArgs, raw: &[String]) -> Result<()> {
    let setup = Setup::load(a.config.as_deref())?;
    let cfg = setup.optics()?;
    let rule = setup.smear_rule()?;
    let opts = AccumulateOptions::with_window(setup.window(cfg.sensor_pixel, a.window_um)?);
    let truth = screen::from_args(&a.truth, &cfg)?;
    let truth_raster = truth.as_ref().map(|s| s.rasterize(DEFAULT_RASTER_SIZE)).transpose()?;
    create_out(&a.out)?;

    let (frames, m) = measure_file(&a.input, &cfg, &opts, rule)?;
    let reference = match &a.reference {
        Some(p) => {
            let (_, r) = measure_file(p, &cfg, &opts, rule)?;
            write_text(&a.out.join("reference_gradients.txt"), &r.gradients.to_table())?;
            Some((p.display().to_string(), r.gradients))
        }
        None => None,
    };
    let report = reconstruct_report(
        &cfg,
        frames,
        &m.gradients,
        reference.as_ref().map(|(n, g)| (n.as_str(), g)),
        truth_raster.as_ref(),
    )
    .context("reconstructing")?;
    write_grid(&a.out.join("centroid_raw.pcbg"), &m.raw.map, &m.raw.metadata())?;
    write_grid(&a.out.join("centroid.pcbg"), &m.map.map, &m.map.metadata())?;
    write_text(&a.out.join("gradients.txt"), &report.gradients.to_table())?;
    write_text(&a.out.join("coeffs.txt"), &report.coeffs().to_table())?;
    write_text(&a.out.join("report.txt"), &report.to_text())?;
    write_grid(
        &a.out.join("phase.pcbg"),
        &raster_grid(&report.reconstruction.raster)?,
        &[("content", "reconstructed phase".into()), ("units", "rad".into()), ("domain", "normalized [-1,1]^2".into())],
    )?;

    let mut man = setup.manifest("reconstruct", raw, cfg.to_doc_string());
    man.inputs.push(a.input.clone());
    man.inputs.extend(a.reference.iter().cloned());
    man.inputs.extend(screen::input_paths(&a.truth).into_iter().map(Path::to_path_buf));
    man.param("reference", a.reference.as_ref().map_or("none".into(), |p| p.display().to_string()));
    man.param("window_px", opts.window);
    man.param("frames", frames);
    man.write(&a.out)
}

fn correct(a: CorrectArgs, raw: &[String]) -> Result<()> {
    let setup = Setup::load(a.config.as_deref())?;
    let cfg = setup.optics()?;
    let rule = setup.smear_rule()?;
    let kernel = CorrelationKernel::from_doc(&setup.doc)?;
    let det = DetectorModel::from_doc(&setup.doc)?;
    let opts = AccumulateOptions::with_window(setup.window(cfg.sensor_pixel, a.window_um)?);
    let scr = screen::from_args(&a.screen, &cfg)?
        .ok_or_else(|| usage("correct needs the screen of the input frames (--preset, --coeffs or --raster)"))?;
    create_out(&a.out)?;

    let (frames, before) = measure_file(&a.input, &cfg, &opts, rule)?;
    let reference = match &a.reference {
        Some(p) => Some(measure_file(p, &cfg, &opts, rule)?.1.gradients),
        None => None,
    };
    let rel = |g: &GradientField| -> Result<GradientField> {
        Ok(match &reference {
            Some(r) => subtract_reference(g, r)?,
            None => g.clone(),
        })
    };
    let est = reconstruct(&rel(&before.gradients)?, &cfg, DEFAULT_MAX_DEGREE).context("reconstructing the screen")?;
    let corrected = corrected_screen(&scr, &est.solution.coeffs, !a.no_tilt)?;
    let correction = if a.no_tilt {
        est.solution.coeffs.without_tilt().scaled(-1.0)
    } else {
        est.solution.coeffs.scaled(-1.0)
    };

    let n = a.frames.unwrap_or(frames);
    if n == 0 {
        return Err(usage("--frames must be at least 1"));
    }
    let src = PairSampler::new(&cfg, &corrected, &kernel).context("building corrected spectra")?;
    let stats = simulate_stats(&src, &det, n, a.seed, &opts)?;
    let after = measure(&stats, &cfg, rule).context("measuring corrected frames")?;
    let after_rel = rel(&after.gradients)?;
    let measured_residual = reconstruct(&after_rel, &cfg, DEFAULT_MAX_DEGREE).context("reconstructing the residual")?;
    let zero = PhaseRaster::from_values(DEFAULT_RASTER_SIZE, vec![0.0; DEFAULT_RASTER_SIZE * DEFAULT_RASTER_SIZE])?;

    let mut s = String::new();
    let _ = writeln!(s, "frames_before = {frames}");
    let _ = writeln!(s, "frames_after = {n}");
    let _ = writeln!(s, "reference = {}", a.reference.as_ref().map_or("none".into(), |p| p.display().to_string()));
    let _ = writeln!(s, "tilt_corrected = {}", !a.no_tilt);
    let _ = writeln!(s, "flags_before = {}", before.gradients.flag_summary());
    let _ = writeln!(s, "flags_after = {}", after.gradients.flag_summary());
    let _ = writeln!(s, "peak_concentration_before = {:.6}", peak_concentration(&before.map.map, &cfg)?);
    let _ = writeln!(s, "peak_concentration_after = {:.6}", peak_concentration(&after.map.map, &cfg)?);
    let _ = writeln!(s, "screen_rmse_waves = {:.6}", screen_rmse(&scr)?);
    let _ = writeln!(s, "residual_rmse_waves = {:.6}", screen_rmse(&corrected)?);
    let _ = writeln!(
        s,
        "measured_residual_rmse_waves = {:.6}",
        pcb::legendre::rmse_waves(&measured_residual.raster, &zero, true)?
    );
    write_text(&a.out.join("report.txt"), &s)?;
    write_text(&a.out.join("correction.txt"), &correction.to_table())?;
    write_text(&a.out.join("gradients_before.txt"), &rel(&before.gradients)?.to_table())?;
    write_text(&a.out.join("gradients_after.txt"), &after_rel.to_table())?;
    write_grid(
        &a.out.join("phase_estimate.pcbg"),
        &raster_grid(&est.raster)?,
        &[("content", "reconstructed phase".into()), ("units", "rad".into())],
    )?;

    let mut man = setup.manifest("correct", raw, cfg.to_doc_string());
    man.seed = Some(a.seed);
    man.inputs.push(a.input.clone());
    man.inputs.extend(a.reference.iter().cloned());
    man.inputs.extend(screen::input_paths(&a.screen).into_iter().map(Path::to_path_buf));
    man.param("frames_after", n);
    man.param("no_tilt", a.no_tilt);
    man.param("window_px", opts.window);
    man.write(&a.out)
}

fn image(a: ImageArgs, raw: &[String]) -> Result<()> {
    let setup = Setup::load(a.config.as_deref())?;
    let icfg = setup.imaging()?;
    let det_cfg = icfg.detector();
    let (w, h) = icfg.roi_pixels;
    let postselect = match setup.doc.usize_pair("postselect_pixel")? {
        Some((x, y)) => Pixel::new(x, y),
        None => Pixel::new(w / 2, h / 2),
    };
    let mut opts = AccumulateOptions::with_window(1);
    match a.mode.as_str() {
        "direct" => {}
        "cpd" => opts.postselect = Some(postselect),
        "anticorr" => opts.symmetry_center2 = Some(icfg.symmetry_center2),
        "centroid" | "difference" => opts.window = setup.window(icfg.pixel, a.window_um)?,
        other => {
            return Err(usage(format!(
                "unknown image mode {other:?}; known: direct, cpd, anticorr, centroid, difference"
            )))
        }
    }
    let rule = SmearRule::AllSameRow;
    let stats = stats_from_file(&a.input, (w, h), &opts)?;
    create_out(&a.out)?;
    let (map, label) = match a.mode.as_str() {
        "direct" => (direct_image(&stats)?, "direct image"),
        "cpd" => (cpd(&stats, rule)?, "conditional probability"),
        "anticorr" => (anticorr_map(&stats, rule)?, "anti-correlated pair JPD"),
        "centroid" => (centroid_marginal(&stats, rule)?.map, "centroid marginal"),
        _ => (difference_marginal(&stats, rule)?.map, "difference marginal"),
    };
    let path = a.out.join(format!("{}.pcbg", a.mode));
    write_grid(&path, &map, &[("content", label.into()), ("frames", stats.n_frames().to_string())])?;

    let mut s = String::new();
    let _ = writeln!(s, "mode = {}", a.mode);
    let _ = writeln!(s, "frames = {}", stats.n_frames());
    let _ = writeln!(s, "peak_fraction = {:.6}", peak_fraction(&map, 3));
    if let (Some(_), "difference") = (&a.reference, a.mode.as_str()) {
        let _ = writeln!(s, "ncc = none (the difference map does not image the object)");
    } else if let Some(p) = &a.reference {
        let mask = read_grid(p).with_context(|| format!("reading mask {}", p.display()))?;
        let target = if a.mode == "centroid" { upsample2(&mask) } else { mask };
        let ncc = normalized_cross_correlation(&map, &target, |_, _| true)?;
        let _ = writeln!(s, "ncc = {ncc:.6}");
    }
    write_text(&a.out.join("report.txt"), &s)?;

    let mut man = setup.manifest("image", raw, det_cfg.to_doc_string());
    man.inputs.push(a.input.clone());
    man.inputs.extend(a.reference.iter().cloned());
    man.param("mode", a.mode.clone());
    man.param("window_px", opts.window);
    if a.mode == "cpd" {
        man.param("postselect_pixel", serde_json::json!([postselect.x, postselect.y]));
    }
    man.write(&a.out)
}

fn upsample2(g: &Grid) -> Grid {
    let mut out = Grid::zeros(2 * g.width(), 2 * g.height());
    for y in 0..out.height() {
        for x in 0..out.width() {
            out.set(x, y, g.get(x / 2, y / 2));
        }
    }
    out
}

fn snr_cmd(a: SnrArgs, raw: &[String]) -> Result<()> {
    if a.n_list.is_empty() || a.n_list.windows(2).any(|w| w[0] >= w[1]) || a.n_list[0] == 0 {
        return Err(usage("--n-list must be nonempty, positive and strictly ascending"));
    }
    let setup = Setup::load(a.config.as_deref())?;
    let cfg = setup.optics()?;
    let rule = setup.smear_rule()?;
    let opts = AccumulateOptions::with_window(setup.window(cfg.sensor_pixel, a.window_um)?);
    let reader = open_frames(&a.input, cfg.roi_pixels)?;
    let total = reader.header().frame_count;
    let max = *a.n_list.last().unwrap();
    if max > total {
        return Err(pcb::Error::domain(format!("{} holds {total} frames, fewer than {max}", a.input.display())).into());
    }
    let center = ApertureIndex::new(cfg.aperture_grid.0 / 2, cfg.aperture_grid.1 / 2);
    let mut points = Vec::new();
    accumulate_frames(reader.take(max as usize), cfg.roi_pixels.0, cfg.roi_pixels.1, &opts, &a.n_list, |n, st| {
        let m = measure(st, &cfg, rule)?;
        points.push((n as f64, snr(&m.map.map, &cfg, center)?));
        Ok(())
    })?;
    create_out(&a.out)?;
    let mut s = String::new();
    let _ = writeln!(s, "aperture = {center}");
    match fit_power_law(&points) {
        Ok(f) => {
            let _ = writeln!(s, "amplitude = {:.6e}", f.amplitude);
            let _ = writeln!(s, "exponent = {:.6}", f.exponent);
            let _ = writeln!(s, "r_squared = {:.6}", f.r_squared);
            let _ = writeln!(s, "excluded = {}", f.excluded);
        }
        Err(e) => {
            let _ = writeln!(s, "fit = refused ({e})");
        }
    }
    s.push_str("\n# n snr\n");
    for (n, v) in &points {
        let _ = writeln!(s, "{n} {v:.17e}");
    }
    write_text(&a.out.join("snr.txt"), &s)?;
    let mut man = setup.manifest("snr", raw, cfg.to_doc_string());
    man.inputs.push(a.input.clone());
    man.param("n_list", a.n_list.clone());
    man.param("window_px", opts.window);
    man.write(&a.out)
}
