//! Crate-wide error type.
//!
//! Container parse failures are split into distinct variants so callers can
//! tell truncation, magic mismatch, length mismatch and header corruption
//! apart; numerical aborts carry the training iteration and the loss
//! component that went non-finite.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor shape or dimension violation; `op` names the operation.
    #[error("{op}: {message}")]
    Shape { op: &'static str, message: String },

    /// Argument outside an operation's documented domain.
    #[error("{op}: {message}")]
    InvalidInput { op: &'static str, message: String },

    /// `log` of a non-positive element.
    #[error("log: non-positive input {value} at element {index}")]
    LogDomain { value: f64, index: usize },

    /// Optimizer step on a parameter whose gradient was never populated.
    #[error("missing gradient for parameter '{0}'")]
    MissingGrad(String),

    /// A loss component left the finite range during training.
    #[error("non-finite {component} at iteration {iteration}")]
    NonFinite { iteration: usize, component: String },

    /// Malformed checkpoint file.
    #[error("checkpoint: {0}")]
    Checkpoint(String),

    /// Container shorter than its fixed header or declared payload.
    #[error("container truncated: need at least {needed} bytes, have {have}")]
    ContainerTruncated { needed: usize, have: usize },

    /// Container magic did not match.
    #[error("container magic mismatch")]
    ContainerMagic,

    /// Container format version not supported by this build.
    #[error("unsupported container version {0}")]
    ContainerVersion(u8),

    /// Declared payload length disagrees with the buffer.
    #[error("container payload length mismatch: header declares {header}, buffer holds {actual}")]
    ContainerLength { header: u64, actual: u64 },

    /// Header checksum failed; the header bytes were altered.
    #[error("container header checksum mismatch")]
    ContainerChecksum,

    /// A header field holds a value outside its legal set.
    #[error("container header field invalid: {0}")]
    ContainerField(String),

    /// Train/eval configuration problem.
    #[error("config: {0}")]
    Config(String),

    /// Corpus loading or sampling problem.
    #[error("corpus: {0}")]
    Corpus(String),

    /// PNG/JPEG encode or decode failure.
    #[error("image codec: {0}")]
    ImageCodec(#[from] image::ImageError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Process exit code for the CLI: 1 usage, 2 I/O and parsing, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonFinite { .. } => 3,
            Error::Config(_) | Error::InvalidInput { .. } => 1,
            _ => 2,
        }
    }
}
