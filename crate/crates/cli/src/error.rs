use std::path::PathBuf;

use alo_core::AloError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Numeric(#[from] AloError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: line {line}, column {column}: cannot parse {cell:?} as a number")]
    Parse { path: PathBuf, line: u64, column: usize, cell: String },
    #[error("{path}: line {line} has {found} fields, expected {expected}")]
    RaggedRows { path: PathBuf, line: u64, expected: usize, found: usize },
    #[error("{path}: {msg}")]
    Data { path: PathBuf, msg: String },
    #[error("{0}")]
    Output(String),
}

impl CliError {
    /// 1 invalid config, 2 numeric failure, 3 IO or unusable input files.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::InvalidConfig(_) => 1,
            CliError::Numeric(_) => 2,
            CliError::Io { .. }
            | CliError::Parse { .. }
            | CliError::RaggedRows { .. }
            | CliError::Data { .. }
            | CliError::Output(_) => 3,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
