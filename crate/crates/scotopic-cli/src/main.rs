//! Command-line driver: simulate photon-counting 2AFC experiments,
//! reconstruct n-photon detection accuracies from the counts, calibrate the
//! cutoff-search threshold, and replicate whole grids of designs to rank
//! them.
//!
//! Exit codes: 0 on success, 2 when the run finished but left flagged
//! results (failed convergence checks or failed replications), 1 on error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod docs;
mod export;
mod manifest;

#[derive(Parser)]
#[command(name = "scotopic", version, about = "Photon-counting 2AFC experiment toolkit")]
struct Cli {
    /// Worker threads for replication and calibration loops (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate an experiment and write the per-intensity counts.
    Simulate(SimulateArgs),
    /// Reconstruct detection accuracies from simulated counts.
    Reconstruct(ReconstructArgs),
    /// Calibrate the prior-vs-posterior rejection threshold.
    Calibrate(CalibrateArgs),
    /// Replicate every design on a grid and aggregate merit figures.
    Sweep(SweepArgs),
    /// Rebuild the combined table from finished sweep cells.
    Report(ReportArgs),
}

#[derive(Args)]
pub struct SimulateArgs {
    /// Experiment description (JSON).
    #[arg(long, required_unless_present = "from_manifest", conflicts_with = "from_manifest")]
    pub config: Option<PathBuf>,
    /// Manifest of a previous run to reproduce byte for byte.
    #[arg(long)]
    pub from_manifest: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Master seed.
    #[arg(long, default_value_t = 0, conflicts_with = "from_manifest")]
    pub seed: u64,
}

#[derive(Args)]
pub struct ReconstructArgs {
    /// Simulated experiment (sim.json written by `simulate`).
    #[arg(long)]
    pub sim: PathBuf,
    /// Reconstruction settings (JSON); built-in defaults when absent.
    #[arg(long, conflicts_with = "from_manifest")]
    pub config: Option<PathBuf>,
    /// Manifest of a previous run to reproduce byte for byte.
    #[arg(long)]
    pub from_manifest: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Master seed.
    #[arg(long, default_value_t = 0, conflicts_with = "from_manifest")]
    pub seed: u64,
    /// Threshold calibration cache.
    #[arg(long, default_value = ".scotopic-cache")]
    pub cache_dir: PathBuf,
    /// Take the top accuracy's posterior mode itself as the next probe
    /// floor instead of mapping it back to the probability scale.
    #[arg(long, conflicts_with = "from_manifest")]
    pub accuracy_floor: bool,
    /// Rerun the search against a flattened likelihood and record whether
    /// the prior passed through untouched.
    #[arg(long, conflicts_with = "from_manifest")]
    pub flat_check: bool,
}

#[derive(Args)]
pub struct CalibrateArgs {
    /// Chains per comparison group.
    #[arg(long, default_value_t = 7)]
    pub chains: usize,
    /// Draws per chain.
    #[arg(long, default_value_t = 2000)]
    pub draws: usize,
    /// Null replications behind the threshold quantile.
    #[arg(long, default_value_t = 2000)]
    pub replications: usize,
    /// Threshold calibration cache.
    #[arg(long, default_value = ".scotopic-cache")]
    pub cache_dir: PathBuf,
    /// Optional extra copy of the calibration record.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Master seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args)]
pub struct SweepArgs {
    /// Design grid (JSON).
    #[arg(long, required_unless_present = "from_manifest", conflicts_with = "from_manifest")]
    pub config: Option<PathBuf>,
    /// Manifest of a previous run to reproduce byte for byte.
    #[arg(long)]
    pub from_manifest: Option<PathBuf>,
    /// Output directory; finished cells under cells/ are reused on resume.
    #[arg(long)]
    pub out: PathBuf,
    /// Master seed.
    #[arg(long, default_value_t = 0, conflicts_with = "from_manifest")]
    pub seed: u64,
    /// Threshold calibration cache.
    #[arg(long, default_value = ".scotopic-cache")]
    pub cache_dir: PathBuf,
    /// Run the full 100-replication protocol instead of the desk default.
    #[arg(long, conflicts_with = "from_manifest")]
    pub full_scale: bool,
}

#[derive(Args)]
pub struct ReportArgs {
    /// Sweep output directory holding cells/.
    #[arg(long)]
    pub dir: PathBuf,
    /// Combined table destination (default: <dir>/combined.csv).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();

    let cli = Cli::parse();
    if cli.workers > 0 {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(cli.workers).build_global();
        if let Err(e) = pool {
            eprintln!("error: building the worker pool: {e}");
            return ExitCode::FAILURE;
        }
    }

    let outcome = match cli.command {
        Command::Simulate(args) => commands::simulate(args),
        Command::Reconstruct(args) => commands::reconstruct(args),
        Command::Calibrate(args) => commands::calibrate(args),
        Command::Sweep(args) => commands::sweep(args),
        Command::Report(args) => commands::report(args),
    };
    match outcome {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
