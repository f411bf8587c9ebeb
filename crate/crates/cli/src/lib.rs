//! `potlab` command-line driver.
//!
//! Every subcommand reads a [`RunConfig`], computes, prints a short summary and
//! writes `<command>.json` into the output directory. The JSON holds a
//! `header` (tool version, timestamp, wall time) and a `body` that depends only
//! on the resolved config, so two runs with the same config differ only in the
//! header.

pub mod config;
mod commands;
mod report;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

pub use config::RunConfig;
pub use report::{Header, Report};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Numerical(#[from] potlab_core::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "potlab", version, about = "Lattice potential theory toolkit")]
pub struct Cli {
    /// TOML run configuration; defaults apply to anything it leaves out.
    #[arg(short, long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (beats the config and the POTLAB_OUT variable).
    #[arg(short, long, global = true)]
    pub output: Option<PathBuf>,
    /// Override `grid.cells`.
    #[arg(short = 'n', long, global = true)]
    pub cells: Option<usize>,
    /// Override `field.family` (parameters take their defaults).
    #[arg(short, long, global = true)]
    pub field: Option<String>,
    /// Override `seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConditionArg {
    G,
    E,
    C,
    Harnack,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Invariant density of the generator.
    Invariant,
    /// Mean exit time from the configured domain ball.
    ExitTime {
        /// Use the dual generator.
        #[arg(long)]
        dual: bool,
    },
    /// Green function of the domain ball with source at its center.
    Green {
        #[arg(long)]
        dual: bool,
    },
    /// Capacity, harmonic extension and equilibrium measure of the condenser.
    Capacity {
        #[arg(long)]
        dual: bool,
    },
    /// Harnack ratios over the ball family, primal and dual.
    Harnack,
    /// One condition scan over the ball family.
    Check {
        #[arg(value_enum)]
        condition: ConditionArg,
        /// Scan the dual generator instead.
        #[arg(long)]
        dual: bool,
    },
    /// Exact lattice identities; fails on any residual above threshold.
    Verify,
    /// Monte Carlo cross-checks against the lattice solution.
    Mc,
    /// Equivalence suite on the grid and its refinement.
    Report,
    /// Print the resolved configuration as TOML.
    Config,
}

/// Parses `args` (program name first), runs the command, returns the exit code.
pub fn run_command<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("potlab: {e}");
            e.exit_code()
        }
    }
}

/// Applies overrides in order: config file, environment, flags.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(dir) = std::env::var_os(config::OUTPUT_ENV) {
        cfg.output.directory = PathBuf::from(dir);
    }
    if let Some(dir) = &cli.output {
        cfg.output.directory = dir.clone();
    }
    if let Some(n) = cli.cells {
        cfg.grid.cells = n;
    }
    if let Some(f) = &cli.field {
        cfg.field = config::FieldConfig { family: f.clone(), params: Default::default() };
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.resolve()
}

/// Runs the parsed command; `Ok(false)` means a check did not pass.
pub fn run(cli: &Cli) -> Result<bool, CliError> {
    let cfg = resolve_config(cli)?;
    commands::dispatch(&cli.command, &cfg)
}
