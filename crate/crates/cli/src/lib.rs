//! Command-line front end for the `odmr` tool.
//!
//! Each subcommand loads a configuration, runs one stage of the pipeline and
//! writes its tables plus a `manifest.json` into the output directory.

mod commands;
mod keys;
mod svg;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{ArgAction, Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use odmr_core::analysis::AnalysisError;
use odmr_core::io_formats::FormatError;
use odmr_core::lineshape::LineshapeError;
use odmr_core::signal_chain::SignalError;
use odmr_core::spin_model::SpinError;
use thiserror::Error;

pub use commands::{run, ArgminReport, FitReport, Outcome};
pub use keys::{config_keys, keys_for};

#[derive(Debug, Parser)]
#[command(name = "odmr", version, about = "ODMR magnetometry simulation and analysis")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CommandKind,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// JSON configuration; omitted keys take their defaults.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Base random seed.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output directory, created if missing.
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    pub out: PathBuf,
    /// Also write SVG plots.
    #[arg(long, global = true)]
    pub svg: bool,
    /// Drop the hyperfine satellite lines.
    #[arg(long, global = true)]
    pub no_hyperfine: bool,
    /// More log output; repeat for more.
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,
    /// Errors only.
    #[arg(short, long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Subcommand)]
pub enum CommandKind {
    /// Field-by-frequency ODMR map and transition table.
    Spectrum,
    /// Simulated AM lock-in sweep at the configured drive point.
    Simulate,
    /// Lorentzian fit of a measured or simulated sweep.
    Fit {
        /// Sweep CSV with columns frequency_hz,lockin_v,dc_v.
        #[arg(long, value_name = "PATH")]
        sweep: PathBuf,
    },
    /// Shot-noise sensitivity over an optical by RF power grid.
    Map,
    /// FM field tracking of a field staircase and its step statistics.
    Steps,
}

impl CommandKind {
    pub fn name(&self) -> &'static str {
        match self {
            CommandKind::Spectrum => "spectrum",
            CommandKind::Simulate => "simulate",
            CommandKind::Fit { .. } => "fit",
            CommandKind::Map => "map",
            CommandKind::Steps => "steps",
        }
    }
}

/// A parsed command line.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub command: CommandKind,
    pub config: Option<PathBuf>,
    pub seed: u64,
    pub out: PathBuf,
    pub svg: bool,
    pub no_hyperfine: bool,
    pub verbosity: u8,
}

impl Invocation {
    pub fn new(command: CommandKind, config: Option<PathBuf>, out: PathBuf) -> Self {
        Invocation {
            command,
            config,
            seed: 0,
            out,
            svg: false,
            no_hyperfine: false,
            verbosity: 1,
        }
    }
}

impl From<Cli> for Invocation {
    fn from(cli: Cli) -> Self {
        let c = cli.common;
        Invocation {
            command: cli.command,
            config: c.config,
            seed: c.seed,
            out: c.out,
            svg: c.svg,
            no_hyperfine: c.no_hyperfine,
            verbosity: if c.quiet { 0 } else { 1 + c.verbose },
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad input files or configuration (exit 2).
    #[error("{0}")]
    Usage(String),
    /// The computation itself failed (exit 1).
    #[error("{0}")]
    Domain(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Domain(_) => 1,
            CliError::Usage(_) => 2,
        }
    }
}

macro_rules! domain_from {
    ($($t:ty),*) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Domain(e.to_string())
            }
        })*
    };
}

domain_from!(AnalysisError, SignalError, SpinError, LineshapeError, FormatError);

/// Clap command with the config keys of each subcommand in its help.
pub fn cli_command() -> clap::Command {
    let mut cmd = Cli::command();
    for name in ["spectrum", "simulate", "fit", "map", "steps"] {
        let text = format!("Config keys read:\n  {}", keys_for(name).join("\n  "));
        cmd = cmd.mut_subcommand(name, |sc| sc.after_help(text));
    }
    cmd
}

pub fn parse_args<I, T>(args: I) -> Result<Invocation, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = cli_command().try_get_matches_from(args)?;
    Ok(Cli::from_arg_matches(&matches)?.into())
}

/// Parses, runs and reports; returns the process exit code.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let inv = match parse_args(args) {
        Ok(inv) => inv,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    init_logging(inv.verbosity);
    match run(&inv) {
        Ok(outcome) => {
            if inv.verbosity > 0 {
                println!("{}", outcome.summary);
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn init_logging(verbosity: u8) {
    let level = match verbosity {
        0 => log::LevelFilter::Error,
        1 => log::LevelFilter::Warn,
        2 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .format_target(false)
        .try_init();
}
