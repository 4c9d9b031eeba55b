//! `farm` command-line front end.

pub mod commands;
pub mod error;
pub mod io;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::Value;

pub use error::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(name = "farm", version, about = "Factor-adjusted robust multiple testing, covariance and spectral estimation")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GlobalArgs {
    /// Random seed; falls back to FARM_SEED, then 0.
    #[arg(long, global = true, env = "FARM_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Upper bound on worker threads. Every computation currently runs on
    /// one thread, so any value is accepted.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Report destination (stdout when absent); the output directory for
    /// `simulate`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Skip one header line in CSV inputs.
    #[arg(long, global = true)]
    pub header: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// PCA factor loadings and scores.
    Factors(commands::FactorsArgs),
    /// Estimate the number of factors.
    Nfactors(commands::NfactorsArgs),
    /// Covariance estimation (robust, structured or plain).
    Covest(commands::CovestArgs),
    /// Factor-adjusted robust multiple testing of zero means.
    Test(commands::TestArgs),
    /// Factor-adjusted penalized regression.
    Select(commands::SelectArgs),
    /// Principal component regression, optionally sketched.
    Pcr(commands::PcrArgs),
    /// Spherical Gaussian mixture by moments.
    Gmm(commands::GmmArgs),
    /// Spectral community detection.
    Sbm(commands::SbmArgs),
    /// Spectral matrix completion.
    Complete(commands::CompleteArgs),
    /// Phase synchronization from a Hermitian measurement matrix.
    Sync(commands::SyncArgs),
    /// Write synthetic data and ground truth.
    Simulate(commands::SimulateArgs),
    /// Factor-model diagnostics.
    Diag(commands::DiagArgs),
}

/// The JSON document every subcommand emits.
#[derive(Debug, Serialize)]
pub struct Report {
    pub command: &'static str,
    pub params: Value,
    pub results: Value,
    pub seed: u64,
    pub version: &'static str,
}

impl Report {
    pub fn to_json(&self) -> Result<String, CliError> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

pub fn run(cli: &Cli) -> Result<Report, CliError> {
    commands::dispatch(&cli.command, &cli.global)
}

fn write_stdout(text: &str) -> Result<(), CliError> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::io(std::path::Path::new("<stdout>"), e)),
        _ => Ok(()),
    }
}

/// Parses `argv`, runs the command and writes the report. Returns the
/// process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let outcome = run(&cli).and_then(|report| {
        let json = report.to_json()?;
        match (&cli.global.out, &cli.command) {
            (Some(path), cmd) if !matches!(cmd, Command::Simulate(_)) => io::write_atomic(path, json.as_bytes()),
            _ => write_stdout(&json),
        }
    });
    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("farm: {e}");
            e.exit_code()
        }
    }
}
