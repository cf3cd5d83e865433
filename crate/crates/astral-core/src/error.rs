//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor shapes do not line up for an operation.
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Dimension {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    /// A value argument violated a precondition.
    #[error("{0}")]
    Argument(String),

    /// Configuration is invalid (bad dimensions, empty target list, ...).
    #[error("{0}")]
    Config(String),

    /// `backward` was called without a matching `forward`.
    #[error("{layer}: backward called before forward")]
    State { layer: &'static str },

    /// Input text could not be parsed; `line` is 1-based.
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A non-finite value surfaced where finite math was required.
    #[error("non-finite value in {0}")]
    Numeric(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    /// Checkpoint was written by an incompatible format version.
    #[error("checkpoint format version {found} not supported (this build reads version {expected})")]
    CheckpointVersion { found: u32, expected: u32 },

    /// Checkpoint bytes fail the trailing CRC-32.
    #[error("checkpoint checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    CheckpointChecksum { stored: u32, computed: u32 },

    /// Checkpoint is truncated or structurally malformed.
    #[error("malformed checkpoint: {0}")]
    CheckpointFormat(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(op: &'static str, left: &[usize], right: &[usize]) -> Error {
        Error::Dimension {
            op,
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }
}
