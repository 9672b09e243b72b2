use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("cannot produce connected scenario after {attempts} attempts")]
    Generation { attempts: usize },

    #[error("no anchor links: at least one node must measure an anchor")]
    NoAnchors,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed scenario document: {0}")]
    Parse(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
