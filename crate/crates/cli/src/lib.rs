//! Config-driven experiment runner for the `steinflow` samplers.

use std::path::PathBuf;

use thiserror::Error;

pub mod analyze;
pub mod config;
pub mod experiment;
pub mod svg;

pub use config::{parse_config, ConfigError, ExperimentConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error(transparent)]
    Steinflow(#[from] steinflow::Error),

    #[error("{0}")]
    Analysis(String),

    #[error("cannot write {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("worker thread panicked")]
    Panic,
}
