use autonlu_core::Error as CoreError;
use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    /// 1 for user and configuration errors, 2 for internal failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Internal(_) => 2,
            CliError::Core(e) => match e {
                CoreError::Divergence { .. }
                | CoreError::Inference(_)
                | CoreError::SingularCovariance { .. }
                | CoreError::Json(_) => 2,
                _ => 1,
            },
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Internal(_) => "internal",
            CliError::Core(e) => match e {
                CoreError::Io { .. } => "io",
                CoreError::Parse { .. } => "parse",
                CoreError::Config(_) | CoreError::IncompatibleEvaluator { .. } => "config",
                CoreError::Integrity(_) | CoreError::Version { .. } => "integrity",
                CoreError::Transport { .. } => "transport",
                CoreError::UnknownDataset(_) => "unknown_dataset",
                _ => "data",
            },
        }
    }

    /// One-line JSON form written to stderr.
    pub fn structured(&self) -> String {
        json!({"error": self.kind(), "message": self.to_string(), "exit_code": self.exit_code()}).to_string()
    }
}

pub(crate) fn io_err(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Core(CoreError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}
