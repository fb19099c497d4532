//! Error-to-exit-code mapping.
//!
//! Stable contract for scripting: 0 success/pass, 1 validation, 2
//! IO/transport, 3 DSL acceptance failure.

use dslbench::dataset::DatasetError;
use dslbench::metrics::MetricError;
use dslbench::repofs::RepoError;
use dslbench::runner::RunnerError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_DSL_FAIL: i32 = 3;

#[derive(Debug)]
pub struct CliError {
    pub exit_code: i32,
    pub message: String,
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        CliError {
            exit_code: EXIT_VALIDATION,
            message: message.into(),
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        CliError {
            exit_code: EXIT_IO,
            message: message.into(),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<RepoError> for CliError {
    fn from(e: RepoError) -> Self {
        let exit_code = match &e {
            RepoError::Io { .. } | RepoError::Encoding { .. } => EXIT_IO,
            _ => EXIT_VALIDATION,
        };
        CliError {
            exit_code,
            message: e.to_string(),
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Repo(inner) => inner.into(),
            other => CliError::validation(other.to_string()),
        }
    }
}

impl From<MetricError> for CliError {
    fn from(e: MetricError) -> Self {
        CliError::validation(e.to_string())
    }
}

impl From<RunnerError> for CliError {
    fn from(e: RunnerError) -> Self {
        let exit_code = match &e {
            RunnerError::Transport { .. }
            | RunnerError::Endpoint { .. }
            | RunnerError::Client(_)
            | RunnerError::MalformedResponse(_)
            | RunnerError::ReplayMiss { .. } => EXIT_IO,
            _ => EXIT_VALIDATION,
        };
        CliError {
            exit_code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::io(e.to_string())
    }
}
