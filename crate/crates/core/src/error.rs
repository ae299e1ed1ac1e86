use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: not a volume file (bad magic bytes)")]
    BadMagic { path: PathBuf },
    #[error("{path}: unsupported volume format version {version}")]
    UnsupportedVersion { path: PathBuf, version: u16 },
    #[error("{path}: volume dimensions {dims:?} overflow")]
    DimOverflow { path: PathBuf, dims: [u64; 3] },
    #[error("{path}: truncated payload (expected {expected} bytes, found {found})")]
    Truncated { path: PathBuf, expected: u64, found: u64 },
    #[error("invalid volume: {0}")]
    InvalidVolume(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("not enough samples for the test: n_a + n_b - p - 1 = {df} (need n_a + n_b >= {needed_total})")]
    InsufficientSamples { df: i64, needed_total: usize },
    #[error("non-finite input: {0}")]
    NonFinite(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Nn(#[from] ndnn::NnError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
