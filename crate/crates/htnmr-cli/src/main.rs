//! `htnmr`: simulate, size and validate hydrogen-transfer NV-NMR runs.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use config::{Overrides, RunConfig};

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "HTNMR_OUT";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "htnmr", version, about = "Hydrogen-transfer NMR with NV-ensemble readout")]
struct Cli {
    /// Run-configuration JSON document.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Molecule JSON document; overrides the config's `molecule`.
    #[arg(long, global = true)]
    molecule: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Drop the loading-stage pi pulses to resolve chemical shifts.
    #[arg(long, global = true)]
    no_pi_pulses: bool,
    /// Output directory [default: config `output`, then $HTNMR_OUT, then ./htnmr-out].
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    /// Hydrogen-transfer protocol, hydrogens emit.
    Transfer,
    /// Prepolarized target read out directly.
    Standard,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Trace, noisy readout, spectrum and fitted peaks.
    Simulate {
        #[arg(long, value_enum, default_value_t = Mode::Transfer)]
        mode: Mode,
    },
    /// Predicted (and optionally simulated) SNR ratio between the protocols.
    Sensitivity {
        /// Sweep T2nv over LO:HI:N log-spaced points and write fig2.csv.
        #[arg(long, value_name = "LO:HI:N")]
        sweep_t2nv: Option<String>,
    },
    /// Compare the engine against the closed form and the explicit-pulse simulation.
    Validate {
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
}

fn output_dir(cli: &Cli, run: &RunConfig) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| run.output.clone())
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("htnmr-out"))
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let run = RunConfig::resolve(&Overrides {
        config: cli.config.as_deref(),
        molecule: cli.molecule.as_deref(),
        seed: cli.seed,
        no_pi_pulses: cli.no_pi_pulses,
    })?;
    match &cli.command {
        Command::Simulate { mode } => commands::simulate(&run, *mode == Mode::Standard, &output_dir(cli, &run)),
        Command::Sensitivity { sweep_t2nv } => {
            let sweep = sweep_t2nv.as_deref().map(commands::parse_sweep).transpose()?;
            commands::sensitivity(&run, sweep, &output_dir(cli, &run))
        }
        Command::Validate { inject_fault } => commands::validate(&run, *inject_fault),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
