//! Configuration-driven experiment runner for the `conclab` binary.

pub mod config;
pub mod model;
pub mod run;

use std::path::PathBuf;

use thiserror::Error;

pub use config::{parse_config, parse_config_str, ExperimentConfig, Kind};
pub use run::{run_experiment, Outcome};

/// Exit status when every check passes.
pub const EXIT_PASS: i32 = 0;
/// Exit status when a check fails.
pub const EXIT_CHECK_FAILED: i32 = 1;
/// Exit status for configuration and input errors.
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),

    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: conclab_core::Error,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn core(context: &str, source: conclab_core::Error) -> Self {
        CliError::Core {
            context: context.to_string(),
            source,
        }
    }
}
