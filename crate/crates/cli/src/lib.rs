//! Library half of the `tglab` binary: config parsing and the subcommands,
//! kept out of `main.rs` so the tests can drive them directly.

pub mod commands;
pub mod config;

use std::fmt;

pub use commands::{run_command, Command, Outcome};
pub use config::{parse_config, parse_config_str, ExperimentConfig};

/// Failure classes, each with its own exit status.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Exit 1. `line` is 0 when no line applies (unreadable file, bad flag).
    #[error("{}", Located(*.line, .msg))]
    Config { line: usize, msg: String },
    /// Exit 2.
    #[error(transparent)]
    Numeric(#[from] tglab::Error),
    /// Exit 3.
    #[error("verification failed: {0}")]
    Verify(String),
}

struct Located<'a>(usize, &'a String);

impl fmt::Display for Located<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            0 => write!(f, "config: {}", self.1),
            n => write!(f, "config line {n}: {}", self.1),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } => 1,
            CliError::Numeric(_) => 2,
            CliError::Verify(_) => 3,
        }
    }
}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cli.md")]
mod book_cli {}
