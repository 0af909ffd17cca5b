use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] veil_core::Error),

    #[error("{path}: {msg}")]
    Config { path: PathBuf, msg: String },

    /// A stage was requested before the stage it reads from has finished.
    #[error("{0}")]
    Dependency(String),

    #[error("{0}")]
    Usage(String),

    #[error("{failed} fold run(s) failed; details in failure.json under {out}")]
    FoldsFailed { failed: usize, out: PathBuf },

    #[error("no completed folds under {0}")]
    NoResults(PathBuf),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub fn config(path: impl Into<PathBuf>, msg: impl ToString) -> Self {
        CliError::Config { path: path.into(), msg: msg.to_string() }
    }

    pub fn code(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.code(),
            CliError::Config { .. } => "config",
            CliError::Dependency(_) => "dependency",
            CliError::Usage(_) => "usage",
            CliError::FoldsFailed { .. } => "fold-failed",
            CliError::NoResults(_) => "no-results",
            CliError::Io { .. } => "io",
        }
    }

    /// `error[<code>]: <message>` on a single line.
    pub fn line(&self) -> String {
        let msg = self.to_string().split_whitespace().collect::<Vec<_>>().join(" ");
        format!("error[{}]: {msg}", self.code())
    }
}
