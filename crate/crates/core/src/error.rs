use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("degenerate vector: {0}")]
    DegenerateVector(String),

    #[error("empty concept: {0}")]
    EmptyConcept(String),

    #[error("label set error: {0}")]
    LabelSet(String),

    #[error("need at least 2 leaves to build a hierarchy, got {0}")]
    TooFewLeaves(usize),

    #[error("clusters overlap on label {0:?}")]
    ClusterOverlap(String),

    #[error("bank too small: {needed} internal nodes but only {available} eligible concepts")]
    BankTooSmall { needed: usize, available: usize },

    #[error("cannot swap siblings {0:?} and {1:?}")]
    SiblingSwap(String, String),

    #[error("incomplete tree: {0}")]
    IncompleteTree(String),

    #[error("empty calibration set")]
    EmptyCalibration,

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("training diverged ({0}); try a lower step size")]
    Divergence(String),

    #[error("format error in {path}: {message} (at {location})")]
    Format {
        path: PathBuf,
        location: Location,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Where in an input file a format error was detected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    Byte(u64),
    Line(usize),
    Document,
}

impl std::fmt::Display for Location {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Location::Byte(b) => write!(f, "byte {b}"),
            Location::Line(l) => write!(f, "line {l}"),
            Location::Document => write!(f, "document"),
        }
    }
}

impl Error {
    pub(crate) fn format(path: &std::path::Path, location: Location, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.to_path_buf(),
            location,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
