use thiserror::Error;

/// Errors produced by the CSGNN library.
#[derive(Debug, Error)]
pub enum CsgnnError {
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("{context}: matrix must be square, got {rows}x{cols}")]
    NonSquare {
        context: &'static str,
        rows: usize,
        cols: usize,
    },

    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unbounded step: all adjacency coefficients and alpha are zero")]
    UnboundedStep,

    #[error("step size {h} exceeds the contractive bound {max}")]
    StepTooLarge { h: f64, max: f64 },

    #[error("dense T-matrix guard exceeded: n = {n} > {max}")]
    GuardExceeded { n: usize, max: usize },

    #[error("non-smooth point: pre-activation magnitude {magnitude:e} below tolerance")]
    NonSmoothPoint { magnitude: f64 },

    #[error("mask selects no nodes")]
    EmptyMask,

    #[error("label {label} at node {node} is outside 0..{classes}")]
    LabelOutOfRange { node: usize, label: i64, classes: usize },

    #[error("not enough non-edges: requested {requested}, available {available}")]
    NotEnoughNonEdges { requested: usize, available: usize },

    #[error("non-finite value detected in {0}")]
    NonFinite(String),

    #[error("training diverged at epoch {epoch}")]
    Diverged {
        epoch: usize,
        last_good: Box<crate::network::NetworkParams>,
    },

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CsgnnError>;

pub(crate) fn shape_err(context: &'static str, expected: impl Into<String>, got: impl Into<String>) -> CsgnnError {
    CsgnnError::ShapeMismatch {
        context,
        expected: expected.into(),
        got: got.into(),
    }
}

pub(crate) fn parse_err(location: impl Into<String>, message: impl Into<String>) -> CsgnnError {
    CsgnnError::Parse {
        location: location.into(),
        message: message.into(),
    }
}
