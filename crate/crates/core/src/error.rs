use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("non-finite value in {block} layer {layer}")]
    Numeric { block: &'static str, layer: usize },

    #[error("bad IDX format in {path}: {detail}")]
    Format { path: PathBuf, detail: String },

    #[error("inconsistent data: {0}")]
    Consistency(String),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("config file not found: {0}")]
    ConfigNotFound(PathBuf),

    #[error("config error at {path}: {detail}")]
    Config { path: String, detail: String },

    #[error("step (t={t}, lambda={lambda}, k={k}): {source}")]
    Step {
        t: usize,
        lambda: f64,
        k: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Stable machine-readable category, used for CLI and HTTP error reports.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Shape { .. } => "shape",
            Error::Argument(_) => "argument",
            Error::Numeric { .. } => "numeric",
            Error::Format { .. } => "format",
            Error::Consistency(_) => "consistency",
            Error::Contract(_) => "contract",
            Error::ConfigNotFound(_) => "config-not-found",
            Error::Config { .. } => "config-invalid",
            Error::Step { source, .. } => source.category(),
            Error::Io { .. } => "io",
        }
    }

    /// Whether the error stems from the user's configuration rather than
    /// from running it.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::ConfigNotFound(_) | Error::Config { .. })
    }

    pub(crate) fn config(path: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            detail: detail.into(),
        }
    }

    pub(crate) fn shape(context: &'static str, expected: impl ToString, actual: impl ToString) -> Self {
        Error::Shape {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
