//! `dicke`: command-line front end for dicke-core.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::Config;
use crate::output::Format;

#[derive(Debug)]
pub enum CliError {
    /// Bad or incomplete input; exit code 2.
    Validation(String),
    /// The computation itself failed; exit code 3.
    Compute(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Compute(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "invalid input: {m}"),
            CliError::Compute(m) => write!(f, "computation failed: {m}"),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "dicke",
    version,
    about = "Superradiance thresholds, mean-field dynamics and lattice phase diagrams"
)]
#[command(
    after_help = "Config keys are listed in docs/config.md. Frequencies are in MHz.\n\
Exit codes: 0 success, 2 invalid input, 3 computation failure."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML config file. Top-level keys: D, delta_B, omega_c, omega_1,
    /// omega_2, Omega (or Omega_1/Omega_2), kappa, seed, unit; sections
    /// [ensemble], [critical], [srt_scan], [evolve], [phase_diagram], [spectrum].
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// RNG seed; overrides `seed` from the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Worker threads for scans and sweeps (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Which tabular outputs to write.
    #[arg(long, global = true, value_enum, default_value = "both")]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Derive effective model parameters from physical inputs and [ensemble].
    Params,
    /// Write the binned coupling and frequency histograms.
    Ensemble,
    /// Critical coupling against line width for Lorentzian and q-Gaussian lines.
    Critical,
    /// Steady-state |alpha| of a single cavity over a grid of couplings.
    SrtScan,
    /// Integrate a single cavity or a cavity lattice and write the trajectory.
    Evolve,
    /// Classify a (t, G) grid of the cavity lattice.
    PhaseDiagram,
    /// |alpha_k|^2 of the final lattice state.
    Spectrum,
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Validation("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Compute(e.to_string()))?;
    }
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    commands::dispatch(cli.command, &cfg, &cli.out, cli.format)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dicke: {e}");
            ExitCode::from(e.code())
        }
    }
}
