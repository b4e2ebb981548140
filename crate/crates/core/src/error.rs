use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("{what}: need {required}, have {available}")]
    Sizing {
        what: String,
        required: usize,
        available: usize,
    },

    #[error("abstract pool `{pool}` has {available} usable tokens, label space needs {required}")]
    PoolExhausted {
        pool: String,
        required: usize,
        available: usize,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("records mix grouping keys: {0}")]
    Grouping(String),

    #[error("missing data for {} key(s): {}", .0.len(), .0.join(", "))]
    Holes(Vec<String>),

    #[error("checkpoint alignment mismatch at: {}", .0.join(", "))]
    Alignment(Vec<String>),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("coverage: {0}")]
    Coverage(String),

    #[error("label mapping: {0}")]
    Mapping(String),

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable category, used for the CLI's error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::InvalidDataset(_) => "invalid_dataset",
            Error::Sizing { .. } => "sizing",
            Error::PoolExhausted { .. } => "pool_exhausted",
            Error::Contract(_) => "contract",
            Error::Grouping(_) => "grouping",
            Error::Holes(_) => "holes",
            Error::Alignment(_) => "alignment",
            Error::UndefinedCorrelation(_) => "undefined_correlation",
            Error::Coverage(_) => "coverage",
            Error::Mapping(_) => "mapping",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
