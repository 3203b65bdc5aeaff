use std::path::PathBuf;

use gibbsflow_core::{DolgopyatError, FlowError, GibbsError, OperatorError, SystemError, UniError};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("config error at {pointer}: {message}")]
    Invalid { pointer: String, message: String },
    #[error("no system given: pass --preset or a `system`/`preset` entry")]
    NoSystem,
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
}

impl ConfigError {
    pub fn invalid(pointer: &str, message: impl Into<String>) -> Self {
        ConfigError::Invalid { pointer: pointer.to_string(), message: message.into() }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("system: {0}")]
    System(#[from] SystemError),
    #[error("operator: {0}")]
    Operator(#[from] OperatorError),
    #[error("gibbs: {0}")]
    Gibbs(#[from] GibbsError),
    #[error("uni: {0}")]
    Uni(#[from] UniError),
    #[error("cancellation: {0}")]
    Dolgopyat(#[from] DolgopyatError),
    #[error("correlation: {0}")]
    Flow(#[from] FlowError),
    #[error("writing {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("no run manifest found under {0:?}")]
    MissingManifest(Vec<PathBuf>),
}
