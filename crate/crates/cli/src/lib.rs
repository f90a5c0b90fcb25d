//! Command-line front end of `bellrelax`: configuration files with units,
//! reproducible run manifests, and the `rates`, `simulate`, `extract`,
//! `oracle`, `ratios` and `tomography` commands.
//!
//! Commands are pure functions from a configuration to a set of output files,
//! so determinism can be checked without touching the filesystem; [`write_run`]
//! persists them together with the manifest.

// `!(x > 0.0)` deliberately rejects NaN; index loops mirror the matrix algebra.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod commands;
pub mod config;
pub mod literature;
pub mod manifest;

use thiserror::Error;

pub use commands::{CommandOutput, OutputFile};
pub use config::RunConfig;
pub use manifest::{write_run, RunManifest, Stamp};

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const RUNTIME: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const FIT: i32 = 3;
    pub const ORACLE: i32 = 4;
}

/// Errors surfaced by the CLI, each mapped to an exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Invalid or incomplete configuration; `key` is the `section.key` path.
    #[error("config error at `{key}`: {msg}")]
    Config { key: String, msg: String },
    /// Malformed input file or argument.
    #[error("input error: {0}")]
    Input(String),
    /// A fit failed or a rate could not be extracted.
    #[error("fit failure: {0}")]
    Fit(String),
    /// An oracle disagreed with the analytic rates.
    #[error("oracle breach: {0}")]
    Oracle(String),
    /// Filesystem failure.
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    /// Any other library failure.
    #[error(transparent)]
    Library(bellrelax::Error),
}

impl From<bellrelax::Error> for CliError {
    fn from(e: bellrelax::Error) -> Self {
        use bellrelax::Error as E;
        match e {
            E::Fit(m) => CliError::Fit(m),
            E::Parse { .. } | E::Json(_) | E::GridMismatch(_) => CliError::Input(e.to_string()),
            other => CliError::Library(other),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Input(_) => exit::CONFIG,
            CliError::Library(bellrelax::Error::InvalidParameter { .. }) => exit::CONFIG,
            CliError::Fit(_) => exit::FIT,
            CliError::Oracle(_) => exit::ORACLE,
            CliError::Io(_) | CliError::Library(_) => exit::RUNTIME,
        }
    }
}
