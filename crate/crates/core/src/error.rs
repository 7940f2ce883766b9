use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid fold count: r = {r} for n = {n}")]
    InvalidFoldCount { n: usize, r: usize },
    #[error("too few points for k-means: n = {n}, k = {k}")]
    TooFewPoints { n: usize, k: usize },
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("empty input")]
    Empty,
    #[error("I/O error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: &std::path::Path, err: std::io::Error) -> Self {
        Error::Io(format!("{}: {err}", path.display()))
    }
}
