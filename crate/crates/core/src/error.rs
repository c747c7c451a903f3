use alloc::string::String;

use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{op}: dimension mismatch between {left:?} and {right:?}")]
    Shape {
        op: &'static str,
        left: [usize; 2],
        right: [usize; 2],
    },
    #[error("tensor of shape {rows}x{cols} expects {rows}x{cols} values, got {len}")]
    Storage {
        rows: usize,
        cols: usize,
        len: usize,
    },
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss([usize; 2]),
    #[error("dropout rate must lie in [0, 1), got {0}")]
    InvalidRate(f64),
    #[error("non-finite state after solver step {step} (t = {t})")]
    NonFinite { step: usize, t: f64 },
    #[error("{what} index {index} out of range (size {bound})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        bound: usize,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("adaptive parameter generation requires fine_tune to be enabled")]
    FineTuneDisabled,
    #[error("every target of the example is outside the location vocabulary")]
    AllTargetsUnknown,
    #[error("unknown parameter {0:?}")]
    UnknownParam(String),
    #[error("unsupported baseline {0:?} (expected frequency, markov1 or plain_gru)")]
    UnsupportedBaseline(String),
}
