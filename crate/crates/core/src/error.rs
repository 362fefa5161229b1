use alloc::string::String;

/// Errors produced by the core algorithms.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("{what} must not be empty")]
    Empty { what: &'static str },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("invalid value for `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },
    #[error("{set} feature row {row} has zero norm")]
    ZeroNormFeature { set: &'static str, row: usize },
    #[error("K = {k} exceeds the {available} unlabeled examples")]
    TooManyNeighbors { k: usize, available: usize },
    #[error("arrow count is zero for class {class} of row {row} and smoothing is 0")]
    ZeroCount { row: usize, class: usize },
    #[error("degenerate scores: {0}")]
    Degenerate(&'static str),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("non-finite value in {what} at row {row}")]
    NonFinite { what: &'static str, row: usize },
    #[error("example {0} is not in the unlabeled pool")]
    NotUnlabeled(usize),
    #[error("model parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
