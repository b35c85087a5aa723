//! The `tsa` command-line tool.
//!
//! Exit codes: 0 success, 2 bad data or model, 3 dataset generation failed,
//! 64 usage error (bad flags, missing input files).

mod args;
mod commands;
mod config;

use std::ffi::OsString;

use clap::error::ErrorKind;
use clap::Parser;

pub use args::{Cli, Command};
pub use config::{expand_config_args, parse_config};

use crate::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_GENERATION: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Data(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(Error::GenerationFailed { .. }) => EXIT_GENERATION,
            CliError::Data(Error::Config(_)) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(e) => write!(f, "{e}"),
        }
    }
}

/// Runs a parsed command.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Generate(a) => commands::generate(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::SweepNoise(a) => commands::sweep_noise(a),
        Command::SweepImbalance(a) => commands::sweep_imbalance(a),
        Command::Importance(a) => commands::importance(a),
        Command::PmuStudy(a) => commands::pmu(a),
        Command::Predict(a) => commands::predict(a),
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn main_with_args(args: Vec<OsString>) -> i32 {
    let args = match expand_config_args(args) {
        Ok(a) => a,
        Err(m) => {
            eprintln!("usage error: {m}");
            return EXIT_USAGE;
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    let threads = cli.command.common().threads;
    let outcome = match threads {
        Some(0) => Err(CliError::Usage("--threads must be at least 1".into())),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| run(&cli)),
            Err(e) => Err(CliError::Usage(format!(
                "cannot start {n} worker threads: {e}"
            ))),
        },
        None => run(&cli),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {} failed: {e}", cli.command.name());
            e.exit_code()
        }
    }
}

/// Entry point of the binary: logging to stderr at `info` unless `RUST_LOG` says otherwise.
pub fn main_from_env() -> i32 {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .try_init();
    main_with_args(std::env::args_os().collect())
}
