//! `smilegan` command-line workflows.
//!
//! Configuration precedence for every command, highest first: command-line
//! flags, the JSON file given by `--config`, the `SMILEGAN_SEED` environment
//! variable (seed only), built-in defaults. Each command writes the fully
//! resolved configuration next to its outputs; passing that file back via
//! `--config` replays the run.

mod commands;
mod config;

use std::ffi::OsString;
use std::fmt;

use clap::Parser;

pub use commands::Cli;
pub use config::RunConfig;

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const USAGE: i32 = 1;
    pub const DATA: i32 = 2;
    pub const NUMERICAL: i32 = 3;
}

/// Failure of a command, classified by exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::Data(_) => exit::DATA,
            CliError::Numerical(_) => exit::NUMERICAL,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<smilegan::data::DataError> for CliError {
    fn from(e: smilegan::data::DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<smilegan::ModelError> for CliError {
    fn from(e: smilegan::ModelError) -> Self {
        use smilegan::ModelError as E;
        match e {
            E::NonFiniteLoss { .. } | E::Numerical(_) => CliError::Numerical(e.to_string()),
            E::InvalidConfig(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<smilegan::selection::SelectionError> for CliError {
    fn from(e: smilegan::selection::SelectionError) -> Self {
        match e {
            smilegan::selection::SelectionError::Model(m) => m.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code. Diagnostics go to standard error.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { exit::SUCCESS };
            let _ = e.print();
            return code;
        }
    };
    match commands::execute(cli) {
        Ok(()) => exit::SUCCESS,
        Err(e) => {
            eprintln!("smilegan: {e}");
            e.exit_code()
        }
    }
}
