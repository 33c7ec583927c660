use std::path::PathBuf;

use serde_json::json;
use smle_core::data::DataError;
use smle_core::estimation::EstimationError;
use smle_core::simulate::SimError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Data { path: PathBuf, source: DataError },
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
    #[error("simulation: {0}")]
    Simulation(#[from] SimError),
    #[error("estimation: {0}")]
    Estimation(#[from] EstimationError),
    #[error("plot {path}: {message}")]
    Plot { path: PathBuf, message: String },
}

impl HarnessError {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Config(_) => "config",
            Self::Io { .. } => "io",
            Self::Json { .. } => "json",
            Self::Data { .. } => "data",
            Self::Csv(_) => "csv",
            Self::Simulation(_) => "simulation",
            Self::Estimation(_) => "estimation",
            Self::Plot { .. } => "plot",
        }
    }

    /// The machine-readable form printed by the binary on failure.
    pub fn to_json(&self) -> serde_json::Value {
        json!({ "error": { "kind": self.kind(), "message": self.to_string() } })
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}
