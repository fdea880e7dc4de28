use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A fixture or spec file could not be parsed.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// The file parsed but its shape disagrees with its own header.
    #[error("structural error: {0}")]
    Structure(String),

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// HH† is singular or too badly conditioned to invert.
    #[error(
        "channel is rank deficient: smallest singular value {smallest_singular_value:.3e}, \
         condition number of HH^H {condition:.3e}"
    )]
    RankDeficient {
        smallest_singular_value: f64,
        condition: f64,
    },

    #[error("capability limit: {0}")]
    Capability(String),

    /// Every violation found while validating an experiment spec.
    #[error("invalid experiment spec:\n  - {}", .0.join("\n  - "))]
    Validation(Vec<String>),

    #[error(
        "{failed} of {trials} trials failed with rank errors at sweep value {sweep} (limit 1%)"
    )]
    TooManyFailures {
        failed: usize,
        trials: usize,
        sweep: f64,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the numerical content of a channel draw.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::RankDeficient { .. } | Error::TooManyFailures { .. }
        )
    }
}
