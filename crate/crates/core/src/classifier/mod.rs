//! Open-set object recognition over fixed-length feature vectors.
//!
//! Each taught class keeps only the mean of its samples. A query is labelled
//! with its nearest prototype unless the ratio of the nearest to the second
//! nearest distance says the match is ambiguous, in which case it is Unknown.

mod features;
mod registry;
mod shared;
mod store;

pub use features::{
    read_gray_png, toy_extract, write_gray_png, GrayImage, GRADIENT_BINS, INTENSITY_BINS, TOY_DIM,
};
pub use registry::{
    ClassRecord, ClassRegistry, ClassificationResult, ClassifyOptions, FeatureVector,
    TeachingSession, DEFAULT_ABSOLUTE_THRESHOLD, DEFAULT_RATIO_THRESHOLD, DEFAULT_TARGET_SAMPLES,
};
pub use shared::SharedRegistry;
pub use store::{load_registry, save_registry, FORMAT_VERSION};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClassifierError {
    #[error("class name must be non-empty printable text")]
    InvalidName,
    #[error("class {0:?} already exists")]
    DuplicateClass(String),
    #[error("no class named {0:?}")]
    UnknownClass(String),
    #[error("feature has dimension {got}, registry expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("teaching session already holds its {0} samples")]
    SessionFull(usize),
    #[error("teaching session has no samples")]
    EmptySession,
    #[error("registry has no classes")]
    EmptyRegistry,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for ClassifierError {
    fn from(e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            ClassifierError::Format("payload is truncated".into())
        } else {
            ClassifierError::Io(e.to_string())
        }
    }
}

pub type Result<T> = std::result::Result<T, ClassifierError>;
