//! Command-line front end.
//!
//! Exit codes: 0 pass, 1 config error, 2 solver error, 3 check failed.

mod commands;
pub mod config;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::montecarlo::Scheme;

pub use config::RunConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;
pub const EXIT_CHECK: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "parisian-dividends", version, about = "Optimal impulse dividends under Parisian ruin")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve for the optimal pair and tabulate the value function.
    Solve(CommonArgs),
    /// Check the HJB conditions, value gaps and smooth fit.
    Verify(CommonArgs),
    /// Compare Monte Carlo estimates with the closed form.
    Simulate(CommonArgs),
    /// Re-solve over a grid of (beta, p, q).
    Sweep(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; falls back to `output_dir` in the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long, value_parser = parse_scheme)]
    pub scheme: Option<Scheme>,
    #[arg(long)]
    pub dt: Option<f64>,
    /// Monte Carlo worker threads. Results do not depend on this.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Also write one CSV of per-path outcomes per starting point.
    #[arg(long)]
    pub write_paths: bool,
}

fn parse_scheme(s: &str) -> std::result::Result<Scheme, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub paths: Option<usize>,
    pub scheme: Option<Scheme>,
    pub dt: Option<f64>,
    pub workers: Option<usize>,
    pub write_paths: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckFailed(pub String);

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Pass,
    Failed(CheckFailed),
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } | Error::Io(_) | Error::Json(_) | Error::InvalidModel(_) | Error::Domain(_) => {
            EXIT_CONFIG
        }
        Error::Degenerate(_) | Error::Unsupported(_) | Error::Solver(_) | Error::Quadrature { .. } => EXIT_SOLVER,
    }
}

impl CommonArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            paths: self.paths,
            scheme: self.scheme,
            dt: self.dt,
            workers: self.workers,
            write_paths: self.write_paths,
        }
    }
}

/// Runs one command and returns its outcome; errors carry the exit code via
/// [`exit_code`].
pub fn execute(cmd: &Command) -> Result<Outcome> {
    let (args, which) = match cmd {
        Command::Solve(a) => (a, 0),
        Command::Verify(a) => (a, 1),
        Command::Simulate(a) => (a, 2),
        Command::Sweep(a) => (a, 3),
    };
    let cfg = RunConfig::from_file(&args.config)?;
    let out = args
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .ok_or_else(|| Error::config("--out", "no output directory given"))?;
    if let Some(n) = args.paths {
        if n == 0 {
            return Err(Error::config("--paths", "must be >= 1"));
        }
    }
    std::fs::create_dir_all(&out)
        .map_err(|e| Error::config("--out", format!("{}: {e}", out.display())))?;
    let ov = args.overrides();
    match which {
        0 => commands::solve(&cfg, &out),
        1 => commands::verify(&cfg, &out),
        2 => commands::simulate(&cfg, &out, &ov),
        _ => commands::sweep(&cfg, &out),
    }
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(Outcome::Pass) => EXIT_OK,
        Ok(Outcome::Failed(CheckFailed(msg))) => {
            eprintln!("check failed: {msg}");
            EXIT_CHECK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
