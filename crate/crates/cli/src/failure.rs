//! Machine-readable failures and their exit codes.

use std::path::Path;

use quirqi::Error;
use serde::Serialize;
use serde_json::{json, Value};

/// Error JSON written to stderr: `{code, message, context}`.
#[derive(Debug, Serialize)]
pub struct Failure {
    pub code: &'static str,
    pub message: String,
    pub context: Value,
    #[serde(skip)]
    pub exit_code: u8,
}

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_UNSTABLE: u8 = 3;
pub const EXIT_DEGENERATE: u8 = 4;
pub const EXIT_RUNTIME: u8 = 5;

impl Failure {
    pub fn config(message: impl Into<String>, path: &Path) -> Self {
        Self {
            code: "invalid_config",
            message: message.into(),
            context: json!({ "config": path.display().to_string() }),
            exit_code: EXIT_CONFIG,
        }
    }

    pub fn io(message: impl Into<String>, path: &Path) -> Self {
        Self {
            code: "io_error",
            message: message.into(),
            context: json!({ "path": path.display().to_string() }),
            exit_code: EXIT_RUNTIME,
        }
    }

    /// Maps a library error raised while running `mode`.
    pub fn from_solver(err: Error, mode: &str) -> Self {
        let (code, exit_code) = match &err {
            Error::InvalidParameter(_) | Error::DimensionMismatch(_) | Error::OracleTooLarge { .. } => {
                ("invalid_config", EXIT_CONFIG)
            }
            Error::UnstableGroundState(_) | Error::ScfNotConverged { .. } | Error::DegenerateFrontier { .. } => {
                ("unstable_model", EXIT_UNSTABLE)
            }
            Error::DegenerateMetric { .. } | Error::NonFinite(_) => ("solver_degeneracy", EXIT_DEGENERATE),
        };
        Self { code, message: err.to_string(), context: json!({ "mode": mode }), exit_code }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("failure serializes")
    }
}
