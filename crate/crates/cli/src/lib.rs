//! Command-line front end: system files, the five subcommands and the
//! report format they share.
//!
//! Exit codes are a stable contract: 0 success, 1 a check failed, 2 the
//! input could not be used.

pub mod commands;
pub mod io;
pub mod report;

use std::path::PathBuf;

pub use commands::{execute, Cli, Outcome};
pub use report::{Entry, EntryStatus, Report};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Lib(#[from] greedy_lab::Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

pub const EXIT_OK: u8 = 0;
pub const EXIT_CHECK_FAILED: u8 = 1;
pub const EXIT_INPUT: u8 = 2;
