mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::{RunConfig, REFERENCE_TOML};
use crate::error::CliError;

/// Ruin time and claim count of a compound Poisson surplus with a
/// refracting threshold.
#[derive(Parser, Debug)]
#[command(name = "refract", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Directory for output files; results go to stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Overrides `sim.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Positive roots of the Lundberg equation for both premium rates.
    Roots,
    /// Transform of ruin time and claim count at the capitals in `run.u`.
    Phi,
    /// Joint density tables of ruin time and claim count.
    Density,
    /// Monte Carlo estimates and joint histograms.
    Simulate,
    /// Runs the self-checks; exits with 4 if any fails.
    Validate,
    /// Prints the reference configuration.
    Init,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Command::Init = cli.command {
        print!("{REFERENCE_TOML}");
        return Ok(());
    }
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    let mut resolved = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => toml::from_str::<RunConfig>(REFERENCE_TOML)
            .map_err(|e| CliError::Config(e.to_string()))?
            .resolve()?,
    };
    if let Some(seed) = cli.seed {
        resolved.config.sim.seed = seed;
    }
    let sink = commands::Sink::new(cli.out)?;
    log::debug!("output directory: {:?}", sink.dir());
    match cli.command {
        Command::Roots => commands::roots(&resolved, &sink),
        Command::Phi => commands::phi(&resolved, &sink),
        Command::Density => commands::density(&resolved, &sink),
        Command::Simulate => commands::simulate(&resolved, &sink),
        Command::Validate => commands::validate(&resolved, &sink),
        Command::Init => unreachable!(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
