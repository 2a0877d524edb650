use std::path::PathBuf;

/// Errors raised anywhere in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Incompatible tensor or input shapes.
    #[error("shape error: {0}")]
    Shape(String),

    /// A precondition of an operation was violated.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A binary file did not match its declared format.
    #[error("format error in {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    /// A tabular input (manifest, genomic table, category map) was rejected.
    #[error("ingest error in {path}{}: {msg}", row.map(|r| format!(" at row {r}")).unwrap_or_default())]
    Ingest { path: PathBuf, row: Option<usize>, msg: String },

    /// A run configuration failed validation.
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format { path: path.into(), msg: msg.into() }
    }

    pub(crate) fn ingest(path: impl Into<PathBuf>, row: Option<usize>, msg: impl Into<String>) -> Self {
        Error::Ingest { path: path.into(), row, msg: msg.into() }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
