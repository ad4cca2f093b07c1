//! Command-line driver: configuration, sample logging and restart, and CSV reports.

pub mod commands;
pub mod config;
pub mod log;
pub mod report;
pub mod tables;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] brine_mlmc::Error),
    #[error("{0}")]
    Output(String),
}

impl CliError {
    /// 1 for numerical and output failures, 2 for bad input.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_numerical() => 1,
            CliError::Output(_) => 1,
            CliError::Core(_) | CliError::Usage(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "brine-mlmc", version, about = "Multilevel Monte Carlo for saltwater intrusion in a fractured aquifer")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// One deterministic simulation with VTK snapshots and QoI series.
    Solve,
    /// Screening runs and fitted convergence rates.
    Screen,
    /// The multilevel estimator at each configured tolerance.
    Mlmc,
    /// Plain Monte Carlo on a single level.
    Mc,
    /// Plot-ready tables from finished runs.
    Report,
}

#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Replace the configured tolerance list.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Simulation level (`solve`, `mc`), finest screened level (`screen`) or cap on `L` (`mlmc`).
    #[arg(long, global = true)]
    pub level: Option<usize>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Replay samples already in the results log instead of recomputing them.
    #[arg(long, global = true)]
    pub resume: bool,
    /// Random inputs for `solve`, as `xi1,xi2,xi3`.
    #[arg(long, global = true, value_delimiter = ',', allow_negative_numbers = true)]
    pub xi: Option<Vec<f64>>,
}

pub fn execute(command: Command, overrides: &Overrides) -> Result<(), CliError> {
    match command {
        Command::Report => {
            let dir = match (&overrides.out, &overrides.config) {
                (Some(out), _) => out.clone(),
                (None, Some(path)) => RunConfig::load(path)?.out,
                (None, None) => return Err(CliError::Usage("report needs --out or --config".into())),
            };
            report::run(&dir)
        }
        other => {
            let path = overrides.config.as_ref().ok_or_else(|| CliError::Usage("missing --config".into()))?;
            let ctx = commands::Context::new(RunConfig::load(path)?, overrides)?;
            match other {
                Command::Solve => ctx.solve(),
                Command::Screen => ctx.screen(),
                Command::Mlmc => ctx.mlmc(),
                Command::Mc => ctx.mc(),
                Command::Report => unreachable!(),
            }
        }
    }
}
