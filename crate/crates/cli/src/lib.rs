//! Batch pipeline driver: stage-by-stage execution with persisted,
//! hash-stamped artifacts between stages.

pub mod artifacts;
pub mod config;
pub mod stages;

pub use config::{config_in_dir, Overrides, PipelineConfig};
pub use stages::{run_stage, Stage, StageContext, StageOutcome};

/// Error category mapped to the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad invocation or configuration (exit 1).
    Usage,
    /// Missing or malformed data (exit 2).
    Data,
    /// Config-hash mismatch between artifacts (exit 3).
    Integrity,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Usage => 1,
            ErrorKind::Data => 2,
            ErrorKind::Integrity => 3,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}
