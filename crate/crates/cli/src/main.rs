//! `sode`: build and verify tangent-bundle structures, integrate the
//! built-in examples and run the Kepler / f-oscillator demos.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

use config::{Config, KEYS_HELP};

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments or configuration; exit code 2.
    #[error("{0}")]
    Usage(String),
    /// The computation ran but a check failed; exit code 1.
    #[error("{0}")]
    Domain(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Domain(_) | CliError::Io(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "sode", version, about = "Tangent-bundle structures for second-order dynamics", after_help = KEYS_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Flat JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Built-in scenario id (overrides the config key).
    #[arg(long, global = true)]
    scenario: Option<String>,
    /// Output directory [default: out].
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// RNG seed [default: 0].
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Tolerance: axiom tolerance for verify, frequency tolerance for match.
    #[arg(long, global = true)]
    tol: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Build a structure for the scenario and check the structure axioms.
    Verify,
    /// Build a structure and write its description.
    Build,
    /// Integrate the scenario field and write the trajectory.
    Integrate,
    /// Estimate the period of the orbit through the initial state.
    Period,
    /// Regularized Kepler problem: structure, shell motions, projection check.
    KeplerDemo,
    /// Deformed oscillator: rebuilt structure, frequency law, motions.
    FoscDemo,
    /// Match Kepler motions with f-oscillator motions by frequency.
    Match,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Verify => "verify",
            Command::Build => "build",
            Command::Integrate => "integrate",
            Command::Period => "period",
            Command::KeplerDemo => "kepler-demo",
            Command::FoscDemo => "fosc-demo",
            Command::Match => "match",
        }
    }
}

fn resolve(cli: &Cli) -> Result<Config, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(s) = &cli.scenario {
        cfg.scenario = Some(s.clone());
    }
    if let Some(o) = &cli.out {
        cfg.out = o.display().to_string();
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.tol {
        if !(t > 0.0) {
            return Err(CliError::Usage(format!("--tol must be positive, got {t}")));
        }
        match cli.command {
            Command::Match => cfg.match_tol = t,
            _ => cfg.tol = t,
        }
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = resolve(&cli).and_then(|cfg| commands::run(cli.command, &cfg));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sode {}: {e}", cli.command.name());
            ExitCode::from(e.exit_code())
        }
    }
}
