mod commands;
mod manifest;
mod screen;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Biphoton Shack-Hartmann wavefront sensing: simulation, reconstruction,
/// imaging maps and SNR studies.
#[derive(Debug, Parser)]
#[command(name = "pcb", version)]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a frame file.
    Simulate(SimulateArgs),
    /// Frames to centroid map, gradients and Legendre coefficients.
    Reconstruct(ReconstructArgs),
    /// Reconstruct, apply the correction and re-simulate.
    Correct(CorrectArgs),
    /// Imaging-mode maps.
    Image(ImageArgs),
    /// SNR of the centroid peak on frame prefixes, with a power-law fit.
    Snr(SnrArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ScreenArgs {
    /// Named screen: `none`, `saddle`, `eq7` or `film(RMS, CORR_LEN, SEED)`.
    #[arg(long, group = "screen")]
    pub preset: Option<String>,
    /// Coefficient table, one `m n alpha` per line.
    #[arg(long, group = "screen")]
    pub coeffs: Option<PathBuf>,
    /// Phase raster in the portable grid format over the normalized domain.
    #[arg(long, group = "screen")]
    pub raster: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub screen: ScreenArgs,
    #[arg(long)]
    pub frames: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Pair source: `shws` (position-correlated), `anticorr` or `imaging`.
    #[arg(long, default_value = "shws")]
    pub mode: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    /// Frame file.
    pub input: PathBuf,
    /// Frame file of the no-phase reference.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Known screen, for an RMSE against the reconstruction.
    #[command(flatten)]
    pub truth: ScreenArgs,
    #[arg(long)]
    pub window_um: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CorrectArgs {
    /// Frame file measured through the screen.
    pub input: PathBuf,
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// The screen the input frames were simulated with.
    #[command(flatten)]
    pub screen: ScreenArgs,
    /// Frames to re-simulate (default: as many as the input).
    #[arg(long)]
    pub frames: Option<u64>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Leave the tilt modes out of the correction.
    #[arg(long)]
    pub no_tilt: bool,
    #[arg(long)]
    pub window_um: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ImageArgs {
    /// Imaging-mode frame file.
    pub input: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `direct`, `cpd`, `anticorr`, `centroid` or `difference`.
    #[arg(long)]
    pub mode: String,
    /// Object mask grid; when given, the report includes the normalized
    /// cross-correlation of the map with it.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long)]
    pub window_um: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SnrArgs {
    pub input: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Ascending prefix sizes, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub n_list: Vec<u64>,
    #[arg(long)]
    pub window_um: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

/// Bad invocation; exits with status 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.chain().any(|e| e.is::<UsageError>()) {
        return 1;
    }
    match err.chain().find_map(|e| e.downcast_ref::<pcb::Error>()) {
        Some(e) if e.is_numerical() => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let raw: Vec<String> = std::env::args().skip(1).collect();
    match commands::run(cli, &raw) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
