use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("block {block}: {message}")]
    InvalidBlock { block: usize, message: String },

    #[error("embedding dimension mismatch: expected {expected}, found {found}{}", .block.map(|b| format!(" in block {b}")).unwrap_or_default())]
    DimensionMismatch {
        expected: usize,
        found: usize,
        block: Option<usize>,
    },

    #[error("block {block}: posterior value {value} at frame {frame}, slot {slot} is outside [0, 1]")]
    PosteriorRange {
        block: usize,
        frame: usize,
        slot: usize,
        value: f32,
    },

    #[error("requested {requested} clusters but only {available} points are available")]
    TooManyClusters { requested: usize, available: usize },

    #[error("cannot-link constraints are infeasible after {attempts} attempts")]
    Infeasible { attempts: usize },

    #[error("matrix is not symmetric: |m[{row}][{col}] - m[{col}][{row}]| = {gap:e}")]
    NotSymmetric { row: usize, col: usize, gap: f64 },

    #[error("eigensolver did not converge after {sweeps} sweeps")]
    NoConvergence { sweeps: usize },

    #[error("DER is undefined: scored speech time is zero")]
    UndefinedDer,

    #[error("could not place {speakers} speaker centroids {distance} apart in dimension {dim}")]
    ImpossibleGeometry {
        speakers: usize,
        distance: f64,
        dim: usize,
    },

    #[error("assignment does not cover {0}")]
    AssignmentMismatch(String),

    #[error("RTTM line {line}: {message}")]
    Rttm { line: usize, message: String },

    #[error("archive header {path}: {message}")]
    ArchiveHeader { path: PathBuf, message: String },

    #[error("archive mismatch: {0}")]
    ArchiveMismatch(String),

    #[error("archive {path}: expected {expected} bytes, found {found}")]
    ArchiveTruncated {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("archive {path}: non-finite value at float {offset}")]
    NonFinite { path: PathBuf, offset: usize },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
