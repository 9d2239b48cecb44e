use std::path::PathBuf;

use crate::partition::Direction;

/// Crate-wide error type.
///
/// File-format problems are split into distinct variants (magic, version,
/// truncation) so callers can tell a corrupt file from a wrong-kind file.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: bad magic {found:?}, expected {expected:?}")]
    BadMagic {
        path: PathBuf,
        found: [u8; 8],
        expected: [u8; 8],
    },

    #[error("{path}: unsupported format version {found} (expected {expected})")]
    BadVersion {
        path: PathBuf,
        found: u32,
        expected: u32,
    },

    #[error("{path}: truncated payload, needed {expected} more bytes")]
    Truncated { path: PathBuf, expected: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("region ({row0},{col0}) {rows}x{cols} leaves the {h}x{w} grid under strict bounds")]
    OutOfBounds {
        row0: i64,
        col0: i64,
        rows: usize,
        cols: usize,
        h: usize,
        w: usize,
    },

    #[error("CFL violation: dt={dt} exceeds stable limit {limit}")]
    CflViolation { dt: f64, limit: f64 },

    #[error("non-finite value detected in {0}")]
    NonFinite(String),

    #[error("halo exchange timed out: rank {to} never received the {direction:?} strip from rank {from}")]
    MissingHaloMessage {
        from: usize,
        to: usize,
        direction: Direction,
    },

    #[error("no output supplied for rank {0}")]
    MissingRank(usize),

    #[error("worker for rank {rank} failed: {source}")]
    WorkerFailure {
        rank: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("manifest error: {0}")]
    Manifest(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
