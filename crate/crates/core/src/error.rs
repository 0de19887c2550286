use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("size overflow: product of dims {0:?} does not fit in usize")]
    SizeOverflow(Vec<usize>),
    #[error("data length {len} does not match dims {dims:?}")]
    ElementCount { dims: Vec<usize>, len: usize },
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: axis {axis} out of range for rank {rank}")]
    InvalidAxis {
        op: &'static str,
        axis: usize,
        rank: usize,
    },
    #[error("{op}: {msg}")]
    InvalidArgument { op: &'static str, msg: String },
    #[error("log of non-positive value {value} at element {index}")]
    NonPositiveLog { index: usize, value: f64 },
    #[error("backward requires a scalar root, got dims {0:?}")]
    NonScalarRoot(Vec<usize>),
    #[error("{op}: expected {expected} input channels, got {got}")]
    ChannelMismatch {
        op: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("{op}: spatial dims {h}x{w} must be even")]
    OddSpatial { op: &'static str, h: usize, w: usize },
    #[error("{op}: spatial dims {h}x{w} must be divisible by {divisor}")]
    IndivisibleSpatial {
        op: &'static str,
        h: usize,
        w: usize,
        divisor: usize,
    },
    #[error("batchnorm: channel has {0} element(s), need at least 2")]
    DegenerateBatchNorm(usize),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("missing gradient for parameter `{0}`")]
    MissingGradient(String),
    #[error("weight file format: {0}")]
    Format(String),
    #[error("image format: {0}")]
    Image(String),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("{0}")]
    Data(String),
    #[error("non-finite loss at step {step}")]
    Divergence { step: usize },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(op: &'static str, msg: impl Into<String>) -> Self {
        Error::InvalidArgument {
            op,
            msg: msg.into(),
        }
    }
}
