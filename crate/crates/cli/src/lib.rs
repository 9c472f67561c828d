//! The `tablescope` command line.
//!
//! Every subcommand writes data (canonical JSON, JSON Lines or a text table)
//! to stdout or `--out`, and diagnostics to stderr. The exit code is the only
//! machine-readable status: 0 success, 1 invalid input, 2 scorer or
//! transport failure, 3 usage error.

mod args;
mod commands;

use std::ffi::OsString;
use std::fmt;
use std::io::Write;

use clap::error::ErrorKind;
use clap::Parser;
use tablescope_core::dataset::DatasetError;
use tablescope_core::evaluation::EvalError;
use tablescope_core::parser::ParseError;
use tablescope_core::retrieval::RetrievalError;
use tablescope_core::{ModelError, ScorerError};

pub use args::{Cli, Command};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_SCORER: i32 = 2;
pub const EXIT_USAGE: i32 = 3;

/// A failed command: exit code plus a one-line reason.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn invalid(message: impl Into<String>) -> Self {
        Failure { code: EXIT_INVALID, message: message.into() }
    }

    pub fn scorer(message: impl Into<String>) -> Self {
        Failure { code: EXIT_SCORER, message: message.into() }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Failure { code: EXIT_USAGE, message: message.into() }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        Failure::invalid(e.to_string())
    }
}

impl From<ScorerError> for Failure {
    fn from(e: ScorerError) -> Self {
        match e {
            ScorerError::EmptyQuery | ScorerError::Config(_) => Failure::usage(e.to_string()),
            _ => Failure::scorer(e.to_string()),
        }
    }
}

impl From<ParseError> for Failure {
    fn from(e: ParseError) -> Self {
        match e {
            ParseError::Scorer(s) => s.into(),
            ParseError::Config(c) => Failure::usage(c.to_string()),
            ParseError::Malformed(m) => Failure::invalid(m),
            other => Failure::scorer(other.to_string()),
        }
    }
}

impl From<RetrievalError> for Failure {
    fn from(e: RetrievalError) -> Self {
        match e {
            RetrievalError::Scorer(s) => s.into(),
            RetrievalError::InvalidK | RetrievalError::EmptyQuery => Failure::usage(e.to_string()),
            RetrievalError::NanScore(_) | RetrievalError::ScoreCount { .. } => Failure::scorer(e.to_string()),
            other => Failure::invalid(other.to_string()),
        }
    }
}

impl From<DatasetError> for Failure {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::InvalidRatio(..) => Failure::usage(e.to_string()),
            other => Failure::invalid(other.to_string()),
        }
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::InvalidK | EvalError::InvalidBatchCount { .. } => Failure::usage(e.to_string()),
            other => Failure::invalid(other.to_string()),
        }
    }
}

/// Parses `argv` (including the program name) and runs the subcommand.
/// Returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    EXIT_OK
                }
                ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                    let _ = e.print();
                    EXIT_USAGE
                }
                _ => {
                    let text = e.to_string();
                    let reason = text
                        .lines()
                        .find(|l| !l.trim().is_empty())
                        .unwrap_or("invalid arguments")
                        .trim_start_matches("error: ");
                    let _ = writeln!(std::io::stderr(), "tablescope: usage: {reason}");
                    EXIT_USAGE
                }
            };
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(std::io::stderr(), "tablescope: {}", f.message.replace('\n', " "));
            f.code
        }
    }
}
