use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("numerical error in {op}: {detail}")]
    Numerical { op: &'static str, detail: String },

    #[error("degenerate input to {op}: column {column} has projected norm {norm:e}")]
    Degenerate {
        op: &'static str,
        column: usize,
        norm: f64,
    },

    #[error("invalid config value for `{key}`: {detail}")]
    Config { key: String, detail: String },

    #[error("{}: {source}", path.display())]
    ConfigFile {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error("failed to parse {}: {detail}", path.display())]
    Parse { path: PathBuf, detail: String },

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn numerical(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Numerical {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn config(key: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            detail: detail.into(),
        }
    }

    /// True for errors caused by user configuration rather than numerics.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config { .. } | Error::Parse { .. } => true,
            Error::ConfigFile { source, .. } => {
                source.is_config() || matches!(**source, Error::Io(_))
            }
            _ => false,
        }
    }
}
