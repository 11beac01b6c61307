//! Configuration-driven runner for the flow laboratory: builds initial data
//! from a JSON config, integrates, records diagnostics and snapshots, and
//! runs the scheduled identity checks.

pub mod config;
pub mod run;
pub mod snapshot;

use iiblab_core::error::LabError;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Lab(#[from] LabError),
}

/// Process exit statuses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExitStatus {
    Ok = 0,
    ConfigError = 1,
    Singularity = 2,
    Blowup = 3,
    VerificationFailed = 4,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }
}

impl CliError {
    pub fn status(&self) -> ExitStatus {
        match self {
            CliError::Lab(LabError::Positivity { .. } | LabError::SingularSystem { .. }) => ExitStatus::Singularity,
            _ => ExitStatus::ConfigError,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Lab(e) => match e {
                LabError::Grid(_) => "grid",
                LabError::Degenerate { .. } => "degenerate-dimension",
                LabError::Degree(_) => "degree",
                LabError::GridMismatch => "grid-mismatch",
                LabError::Positivity { .. } => "positivity",
                LabError::SingularSystem { .. } => "singular-system",
                LabError::Valence { .. } => "valence",
                LabError::Source(_) => "source",
                LabError::NotBalanced { .. } => "not-balanced",
                LabError::Trajectory(_) => "trajectory",
                LabError::Snapshot { .. } => "snapshot",
                LabError::Io(_) => "io",
            },
        }
    }

    /// The structured form written to the error stream.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "error": {
                "kind": self.kind(),
                "message": self.to_string(),
                "exitCode": self.status().code(),
            }
        })
    }
}
