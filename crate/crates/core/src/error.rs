use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid array geometry: {0}")]
    InvalidGeometry(String),
    #[error("invalid imaging grid: {0}")]
    InvalidGrid(String),
    #[error("invalid region: {0}")]
    InvalidRegion(String),
    #[error("invalid phantom: {0}")]
    InvalidPhantom(String),
    #[error("record window too short: need {needed} samples, have {available}")]
    RecordTooShort { needed: usize, available: usize },
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("dataset is not monostatic: channel ({0}, {1}) carries signal")]
    NotMonostatic(usize, usize),
    #[error("region {0:?} holds no focal points to evaluate")]
    EmptyRegion(crate::geometry::Region),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}: not a backscatter dataset (bad magic)")]
    BadMagic { path: PathBuf },
    #[error("{path}: unsupported dataset version {found} (expected {expected})")]
    VersionMismatch { path: PathBuf, found: u32, expected: u32 },
    #[error("{path}: corrupt header: {reason}")]
    CorruptHeader { path: PathBuf, reason: String },
    #[error("{path}: truncated payload: expected {expected} bytes, found {found}")]
    Truncated { path: PathBuf, expected: u64, found: u64 },
    #[error("{path}: malformed energy map CSV at line {line}: {reason}")]
    MalformedCsv { path: PathBuf, line: usize, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
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
