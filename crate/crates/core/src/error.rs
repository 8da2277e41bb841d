use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad error classes, used by the CLI and the C API to pick exit/status codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Malformed or inconsistent input data.
    Data,
    /// A value handed to an operation violates its preconditions.
    Usage,
    /// An internal invariant did not hold.
    Internal,
}

#[derive(Debug, Error)]
pub enum Error {
    // schema / encoding
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("unknown value {value:?} for attribute {attribute:?}")]
    UnknownValue { attribute: String, value: String },
    #[error("unknown attribute {0:?}")]
    UnknownAttribute(String),
    #[error("tuple has {got} values but schema has {expected} attributes")]
    ArityMismatch { expected: usize, got: usize },
    #[error("malformed feature vector: {0}")]
    MalformedVector(String),
    #[error("block {index} is for attribute {got:?}, expected {expected:?}")]
    BlockOrderMismatch {
        index: usize,
        expected: String,
        got: String,
    },
    #[error("block for attribute {attribute:?} has width {got}, expected {expected}")]
    BlockWidthMismatch {
        attribute: String,
        expected: usize,
        got: usize,
    },
    #[error("block for attribute {attribute:?} is not one-hot")]
    MalformedBlock { attribute: String },
    #[error("viable combination #{index} does not conform to the schema: {reason}")]
    InvalidViableEntry { index: usize, reason: String },

    // dataset
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: {source}")]
    AtLine {
        line: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("unknown food label {0:?}")]
    UnknownFoodLabel(String),
    #[error("combination at line {line} repeats line {first_line} with a different food ({first} vs {second})")]
    DuplicateTuple {
        line: usize,
        first_line: usize,
        first: String,
        second: String,
    },
    #[error("cannot split an empty record list")]
    EmptyInput,
    #[error("invalid split fractions: {0}")]
    InvalidSplit(String),

    // image
    #[error("not a PPM file (expected P3 or P6 magic)")]
    BadMagic,
    #[error("bad PPM header: {0}")]
    BadHeader(String),
    #[error("unsupported maxval {0} (only 255 is supported)")]
    MaxvalUnsupported(u32),
    #[error("pixel data truncated: expected {expected} samples, found {found}")]
    TruncatedPixelData { expected: usize, found: usize },
    #[error("bad pixel data: {0}")]
    BadPixelData(String),
    #[error("image has no pixels")]
    EmptyImage,
    #[error("palette has no entries")]
    EmptyPalette,
    #[error("invalid palette: {0}")]
    InvalidPalette(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    // tree
    #[error("label multiset is empty")]
    EmptyLabelSet,
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid label {0:?}: labels must be non-empty and free of whitespace and commas")]
    InvalidLabel(String),
    #[error("model text, line {line}: {message}")]
    ModelFormat { line: usize, message: String },

    // ensemble
    #[error("ensemble has no base models")]
    EmptyEnsemble,
    #[error("bin count must be at least 1")]
    InvalidBinCount,
    #[error("no non-empty hardness bins to sample from")]
    NoNonEmptyBins,
    #[error("invalid under-sampling target {0}")]
    InvalidTarget(usize),
    #[error("hardness {0} outside [0, 1]")]
    InvalidHardness(f64),
    #[error("invalid self-pace schedule: {0}")]
    InvalidSchedule(String),
    #[error("binary problem needs at least one sample per class")]
    EmptyClass,
    #[error("multiclass training needs at least two classes")]
    SingleClassInput,

    // metrics
    #[error("y_true has {0} entries but y_pred has {1}")]
    LengthMismatch(usize, usize),
    #[error("label {0:?} is not in the class set")]
    UnknownLabel(String),
    #[error("evaluation set is empty")]
    EmptyEvaluationSet,
    #[error("beta must be positive, got {0}")]
    InvalidBeta(f64),

    // pipeline
    #[error("provider for attribute {attribute:?} failed: {cause}")]
    ProviderFailure { attribute: String, cause: String },
    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn at_line(self, line: usize) -> Self {
        match self {
            e @ (Error::Parse { .. } | Error::DuplicateTuple { .. } | Error::AtLine { .. }) => e,
            e => Error::AtLine {
                line,
                source: Box::new(e),
            },
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::AtLine { source, .. } => source.class(),
            Error::Invariant(_) => ErrorClass::Internal,
            Error::InvalidParameter(_)
            | Error::InvalidBinCount
            | Error::InvalidTarget(_)
            | Error::InvalidSchedule(_)
            | Error::InvalidBeta(_)
            | Error::InvalidSplit(_) => ErrorClass::Usage,
            _ => ErrorClass::Data,
        }
    }
}
