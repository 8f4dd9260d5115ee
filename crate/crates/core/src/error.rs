use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("vector has (near-)zero norm")]
    ZeroVector,
    #[error("vector contains NaN or infinite values")]
    NonFinite,
    #[error("vector is empty")]
    EmptyVector,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("binary code width mismatch: {left} vs {right} bits")]
    WidthMismatch { left: usize, right: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("duplicate id {0}")]
    DuplicateId(u64),
    #[error("shortlist size {shortlist} is smaller than k = {k}")]
    ShortlistTooSmall { shortlist: usize, k: usize },
    #[error("k must be at least 1")]
    InvalidK,
    #[error("index is empty")]
    EmptyIndex,
    #[error("corrupt file: {0}")]
    CorruptSnapshot(String),
    #[error("unsupported format version {0}")]
    VersionUnsupported(u8),
    #[error("batch has no anchor-positive pair")]
    NoValidPairs,
    #[error("batch has no negatives: a single class fills the whole batch")]
    NoNegatives,
    #[error("pre-normalization activation is all zero")]
    DegenerateActivation,
    #[error("training data needs at least two classes and one class with two samples")]
    InsufficientClasses,
    #[error("retrieval evaluation needs labeled queries and labeled index entries")]
    UnlabeledData,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}
