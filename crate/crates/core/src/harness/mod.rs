//! Configuration, CLI and experiment orchestration.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::grid::GridError;
use crate::inequality_lab::LabError;
use crate::model::ValidationError;
use crate::monitors::MonitorError;

pub mod cli;
pub mod config;
pub mod output;
pub mod runner;

pub use cli::{cli, ExitCode};
pub use config::{load_config, parse_config, ConfigFile, IneqConfig, Loaded, RunConfig, RunKind, SweepConfig, SCHEMA};
pub use output::{verify_manifest, FileEntry, RunManifest};
pub use runner::{run_ineq, run_single, run_sweep, Invocation, IneqReport, RunReport, SweepReport, SweepRow, SWEEP_COLUMNS};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Lab(#[from] LabError),
    #[error(transparent)]
    Monitor(#[from] MonitorError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("{0}")]
    Output(String),
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }

    /// Message without the variant prefix.
    pub fn detail(&self) -> String {
        match self {
            Self::Parse(s) | Self::Invalid(s) | Self::Output(s) => s.clone(),
            other => other.to_string(),
        }
    }
}
