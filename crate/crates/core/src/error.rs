use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed NIfTI-1 file: {0}")]
    Format(String),

    #[error("unsupported volume shape: {0}")]
    UnsupportedShape(String),

    #[error("invalid voxel data: {0}")]
    Data(String),

    #[error("incompatible grids: {field} differs ({a} vs {b})")]
    Geometry { field: &'static str, a: String, b: String },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("invalid table: {0}")]
    Table(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Errors caused by the caller's parameters or inputs not matching the
    /// preconditions of an operation, as opposed to failures while running it.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Parameter(_) | Error::Geometry { .. } | Error::Table(_) => true,
            Error::Stage { source, .. } => source.is_validation(),
            _ => false,
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
