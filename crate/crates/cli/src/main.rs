//! `sdm` — design, analyze, simulate, and sweep sigma-delta modulators for
//! oversampled band-limited Gaussian sources.
//!
//! Exit codes: 0 on success, 2 on usage or input errors, 3 when an internal
//! cross-check fails on otherwise valid inputs.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod files;
mod manifest;

pub use files::CliError;

#[derive(Parser)]
#[command(
    name = "sdm",
    version,
    about = "Sigma-delta modulator design, rate-distortion analysis, and Monte Carlo simulation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Design a feedback filter for a target distortion
    Design(DesignArgs),
    /// Tabulate rate-distortion curves for an existing filter
    Analyze(AnalyzeArgs),
    /// Run the Monte Carlo loop described by a JSON config
    Simulate(SimulateArgs),
    /// Sweep one axis and emit a long-form CSV
    Sweep(SweepArgs),
}

#[derive(Args)]
pub struct DesignArgs {
    /// Oversampling ratio (>= 1)
    #[arg(long = "L")]
    pub l: f64,
    /// Source variance
    #[arg(long)]
    pub sigma2x: f64,
    /// Target MSE (or frequency-weighted MSE with --weight)
    #[arg(long)]
    pub distortion: f64,
    /// FIR predictor order
    #[arg(long, conflicts_with = "unconstrained")]
    pub order: Option<usize>,
    /// Spectral-factorization design instead of a fixed-order predictor
    #[arg(long)]
    pub unconstrained: bool,
    /// Impulse-response length kept after truncation (unconstrained only)
    #[arg(long, default_value_t = 4096)]
    pub taps: usize,
    /// Transition half-width in radians (unconstrained; default pi/(8L))
    #[arg(long)]
    pub transition: Option<f64>,
    /// Frequency-weight CSV (`omega,value`) for weighted-MSE designs
    #[arg(long)]
    pub weight: Option<PathBuf>,
    /// Spectral grid size override (power of two)
    #[arg(long)]
    pub grid: Option<usize>,
    /// Output filter file (JSON)
    #[arg(long, short)]
    pub output: PathBuf,
    /// Also write the taps as `n,c_n` CSV
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Args)]
pub struct AnalyzeArgs {
    /// Filter file produced by `sdm design`
    #[arg(long)]
    pub filter: PathBuf,
    /// Oversampling ratio; must match the filter file
    #[arg(long = "L")]
    pub l: f64,
    /// Source variance
    #[arg(long)]
    pub sigma2x: f64,
    /// Smallest distortion on the (log-spaced) grid
    #[arg(long)]
    pub dmin: f64,
    /// Largest distortion on the grid
    #[arg(long)]
    pub dmax: f64,
    /// Number of grid points
    #[arg(long, default_value_t = 25)]
    pub points: usize,
    /// Output CSV
    #[arg(long, short)]
    pub output: PathBuf,
}

#[derive(Args)]
pub struct SimulateArgs {
    /// Simulation config (JSON)
    #[arg(long)]
    pub config: PathBuf,
    /// Output report (JSON)
    #[arg(long, short)]
    pub output: PathBuf,
    /// Override the config's seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Dump a per-sample trace CSV (large)
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
pub enum SweepAxis {
    /// Predictor order p (design columns)
    Order,
    /// Oversampling ratio L at a fixed filter and noise variance
    Oversampling,
    /// Quantizer rate R in bits (Monte Carlo columns)
    Rate,
    /// Block length N (Monte Carlo columns)
    Block,
}

#[derive(Args)]
pub struct SweepArgs {
    #[arg(long, value_enum)]
    pub axis: SweepAxis,
    /// First axis value
    #[arg(long)]
    pub from: f64,
    /// Last axis value (inclusive)
    #[arg(long)]
    pub to: f64,
    /// Axis increment
    #[arg(long, default_value_t = 1.0)]
    pub step: f64,
    /// Oversampling ratio (order axis)
    #[arg(long = "L")]
    pub l: Option<f64>,
    /// Source variance (order and oversampling axes)
    #[arg(long)]
    pub sigma2x: Option<f64>,
    /// Target distortion (order axis)
    #[arg(long)]
    pub distortion: Option<f64>,
    /// Filter file (oversampling axis; defaults to C = 0)
    #[arg(long)]
    pub filter: Option<PathBuf>,
    /// Sigma-delta noise variance (oversampling axis)
    #[arg(long = "sigma2-sd")]
    pub sigma2_sd: Option<f64>,
    /// Base simulation config (rate and block axes)
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override the config's seed (rate and block axes)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output CSV
    #[arg(long, short)]
    pub output: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Design(args) => commands::run_design(&args),
        Command::Analyze(args) => commands::run_analyze(&args),
        Command::Simulate(args) => commands::run_simulate(&args),
        Command::Sweep(args) => commands::run_sweep(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
