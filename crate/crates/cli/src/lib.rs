//! Experiment driver behind the `equirl` binary.
//!
//! Exit codes: `0` success, `1` bad arguments or inputs, `2` failure while
//! running. Reports carry the config hash and seed; `--no-timestamp` drops
//! the only field that varies between identical runs.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

mod commands;
pub mod report;

pub use report::{read_key_values, ErrorRow, WeightRow};

/// Version of the TOML experiment config format.
pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "equirl", version, about = "Approximately equivariant RL experiments")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalOpts {
    /// Suppress progress and summary output.
    #[arg(long, global = true)]
    pub quiet: bool,
    /// Leave the generation timestamp out of reports.
    #[arg(long, global = true)]
    pub no_timestamp: bool,
    /// Worker threads for seed sweeps.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the optimal-value invariance bound on an MDP file.
    VerifyBound(commands::bound::VerifyBoundArgs),
    /// Train exact, relaxed and unconstrained Q-networks on a gridworld.
    GridworldFit(commands::fit::GridworldFitArgs),
    /// Simulate a trading policy over a price CSV.
    TradeSim(commands::trade::TradeSimArgs),
    /// Equivariance errors and relaxed weights of a relaxed layer.
    EquivReport(commands::equiv::EquivReportArgs),
    /// Write a synthetic price fixture.
    MakeFixture(commands::fixture::MakeFixtureArgs),
}

/// Failure of a subcommand, split by exit code.
#[derive(Debug)]
pub enum Failure {
    Validation(String),
    Runtime(String),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Validation(m) => write!(f, "invalid input: {m}"),
            Failure::Runtime(m) => write!(f, "run failed: {m}"),
        }
    }
}

pub(crate) trait Phase<T> {
    /// Errors while reading and checking inputs.
    fn validation(self) -> Result<T, Failure>;
    /// Errors once the pipeline is running.
    fn runtime(self) -> Result<T, Failure>;
}

impl<T, E: std::fmt::Display> Phase<T> for Result<T, E> {
    fn validation(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Validation(e.to_string()))
    }
    fn runtime(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Runtime(e.to_string()))
    }
}

pub(crate) fn require_file(path: &PathBuf, what: &str) -> Result<(), Failure> {
    if !path.is_file() {
        return Err(Failure::Validation(format!("{what} {} does not exist", path.display())));
    }
    Ok(())
}

/// Parses `argv` (including the program name) and runs the subcommand.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    if cli.global.jobs == 0 {
        eprintln!("invalid input: --jobs must be at least 1");
        return 1;
    }
    let g = &cli.global;
    let result = match &cli.command {
        Command::VerifyBound(a) => commands::bound::run(a, g),
        Command::GridworldFit(a) => commands::fit::run(a, g),
        Command::TradeSim(a) => commands::trade::run(a, g),
        Command::EquivReport(a) => commands::equiv::run(a, g),
        Command::MakeFixture(a) => commands::fixture::run(a, g),
    };
    match result {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("equirl: {f}");
            f.code()
        }
    }
}
