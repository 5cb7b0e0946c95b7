//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid coordinate: {0}")]
    InvalidCoordinate(String),

    #[error("invalid polygon: {0}")]
    InvalidPolygon(String),

    #[error("degenerate area: {0}")]
    DegenerateArea(String),

    #[error("empty track")]
    EmptyTrack,

    #[error("invalid series: {0}")]
    InvalidSeries(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("train-mode batch too small: batch normalization needs at least 2 rows, got {0}")]
    BatchTooSmall(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },

    #[error("truncated file: {0}")]
    Truncated(String),

    #[error("corrupted checkpoint: {0}")]
    CorruptedCheckpoint(String),

    #[error("missing file {path}: {source}")]
    MissingFile {
        path: String,
        source: std::io::Error,
    },

    #[error("manifest schema violation: {0}")]
    Schema(String),

    #[error("duplicate building id: {0}")]
    DuplicateId(String),

    #[error("embedding count mismatch: {path} holds {embedding_rows} rows but the manifest lists {buildings} buildings")]
    CountMismatch {
        path: String,
        embedding_rows: usize,
        buildings: usize,
    },

    #[error("scenario {scenario} embeddings are not present in the manifest")]
    MissingScenario { scenario: &'static str },

    #[error("empty split: {0}")]
    EmptySplit(String),

    #[error("no computable class: every class lacks positives or negatives")]
    NoComputableClass,

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
