use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),

    #[error("malformed header: {0}")]
    BadHeader(String),

    #[error("row {row}: expected {expected} columns, found {found}")]
    RaggedRow { row: usize, expected: usize, found: usize },

    #[error("row {row}: missing sample id")]
    MissingId { row: usize },

    #[error("duplicate sample id {0:?}")]
    DuplicateId(String),

    #[error("row {row}, column {column}: non-numeric feature value {value:?}")]
    NonNumericFeature { row: usize, column: usize, value: String },

    #[error("row {row}, column {column}: non-finite feature value")]
    NonFiniteFeature { row: usize, column: usize },

    #[error("row {row}: unknown label token {token:?}")]
    UnknownLabel { row: usize, token: String },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid split: {0}")]
    InvalidSplit(String),

    #[error("mask length {mask} does not match feature count {features}")]
    MaskLength { mask: usize, features: usize },

    #[error("mask selects no features")]
    EmptyMask,

    #[error("dataset contains a single class; both classes are required")]
    SingleClass,

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("image has no foreground pixels")]
    EmptyForeground,

    #[error("bounding box {0:?} is invalid for the image")]
    InvalidBox([usize; 4]),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("k = {k} out of range 1..={n}")]
    KOutOfRange { k: usize, n: usize },

    #[error("feature width mismatch: model expects {expected}, input has {found}")]
    WidthMismatch { expected: usize, found: usize },

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("dimension {0} too large for exhaustive search (max 20)")]
    DimensionTooLarge(usize),

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("label {0} outside {{0,1}}")]
    BadLabel(u8),

    #[error("unsupported model document: {0}")]
    ModelFormat(String),

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
