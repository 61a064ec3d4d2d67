use std::path::PathBuf;

use swissmob::extensions::ExtensionError;
use swissmob::fit::FitError;
use swissmob::io::IoError;
use swissmob::telecom::TelecomError;
use swissmob::{ModelError, PanelError};
use thiserror::Error;

/// Everything that ends a command early. All of these exit with code 2;
/// model warnings are not errors and are reported through the verdict.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {message}")]
    Path { path: PathBuf, message: String },
    #[error("config {path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("no completed runs found under {0}")]
    NoRunsFound(PathBuf),
    #[error(transparent)]
    Panel(#[from] PanelError),
    #[error(transparent)]
    Telecom(#[from] TelecomError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Extension(#[from] ExtensionError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Diagnostics(#[from] swissmob::diagnostics::DiagnosticsError),
}

impl CliError {
    pub fn path(path: impl Into<PathBuf>, err: impl std::fmt::Display) -> Self {
        CliError::Path { path: path.into(), message: err.to_string() }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
