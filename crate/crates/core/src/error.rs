use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the localization library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("domain violation in {op}: {detail}")]
    Domain { op: &'static str, detail: String },

    #[error("index ({row}, {col}) outside {n_rows}x{n_cols} grid")]
    IndexOutOfBounds {
        row: usize,
        col: usize,
        n_rows: usize,
        n_cols: usize,
    },

    #[error("grid coordinates must be strictly ascending ({axis} axis)")]
    UnsortedGrid { axis: &'static str },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("{malformed} of {total} lines malformed in {path}")]
    Malformed {
        path: PathBuf,
        malformed: usize,
        total: usize,
    },

    #[error("region of interest does not intersect the data bounds")]
    EmptyIntersection,

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain {
            op,
            detail: detail.into(),
        }
    }

    /// Short stable identifier, used by the CLI's machine-readable error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Domain { .. } => "domain",
            Error::IndexOutOfBounds { .. } => "index_out_of_bounds",
            Error::UnsortedGrid { .. } => "unsorted_grid",
            Error::Empty(_) => "empty",
            Error::Malformed { .. } => "malformed",
            Error::EmptyIntersection => "empty_intersection",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
