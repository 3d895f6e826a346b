use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape error in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("input too short: {0}")]
    TooShort(String),
    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },
    #[error("infeasible CTC alignment: {labels} labels need at least {needed} frames, got {frames}")]
    Infeasible {
        labels: usize,
        needed: usize,
        frames: usize,
    },
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    #[error("segment ({start_ms}, {end_ms}) exceeds duration {duration_ms} ms")]
    Bounds {
        start_ms: u64,
        end_ms: u64,
        duration_ms: u64,
    },
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("streaming unsupported: {0}")]
    UnsupportedStreaming(String),
    #[error("session lifecycle: {0}")]
    Lifecycle(String),
    #[error("missing parameter `{0}`")]
    MissingParam(String),
}

pub(crate) fn shape_err(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Error {
    Error::Shape {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}
