//! Batch front end: configuration, command dispatch, artifacts and the
//! persistent mode cache.

pub mod cache;
pub mod commands;
pub mod config;
pub mod output;
pub mod validate;

use thiserror::Error;

pub use commands::{execute, Command, RunOptions, RunReport};
pub use config::{load_config, parse_config, RunConfig};

/// Environment variable naming the default mode-cache directory.
pub const CACHE_DIR_ENV: &str = "DPPLN_CACHE_DIR";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("{context}: {source}")]
    Computation {
        context: String,
        #[source]
        source: dppln::Error,
    },
    #[error("validation failed: {0}")]
    ValidationFailed(String),
    #[error("I/O error: {0}")]
    Io(String),
}

impl CliError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Schema { .. } => 2,
            CliError::Computation { .. } | CliError::ValidationFailed(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

/// Attaches command context to core errors.
pub trait Context<T> {
    fn context(self, what: &str) -> Result<T, CliError>;
}

impl<T> Context<T> for dppln::Result<T> {
    fn context(self, what: &str) -> Result<T, CliError> {
        self.map_err(|source| CliError::Computation {
            context: what.to_string(),
            source,
        })
    }
}
