use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("outside-domain: point ({x}, {y}) lies outside the grid")]
    OutsideDomain { x: f64, y: f64 },

    #[error("grid-mismatch: {0}")]
    GridMismatch(String),

    #[error("coefficient-not-positive: value {value} at node {node}")]
    CoefficientNotPositive { node: usize, value: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("non-finite value at index {0}")]
    NonFinite(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("malformed pgm: {0}")]
    Pgm(String),

    #[error("malformed csv: {0}")]
    Csv(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
