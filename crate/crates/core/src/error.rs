//! Error type shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor ranks, extents, or geometry do not line up.
    #[error("shape error: {0}")]
    Shape(String),

    /// An operation was called in the wrong state (missing forward cache,
    /// train-mode requirement violated, non-positive variance, ...).
    #[error("state error: {0}")]
    State(String),

    /// A byte stream did not start with the expected magic.
    #[error("bad magic for {format}")]
    BadMagic { format: &'static str },

    /// A byte stream ended before the declared payload.
    #[error("truncated {format}: {detail}")]
    Truncated { format: &'static str, detail: String },

    /// A container declares a format version newer than this build understands.
    #[error("unsupported {format} version {version}")]
    UnsupportedVersion { format: &'static str, version: u16 },

    /// A container holds a tag or type code this build does not know.
    #[error("unknown {format} tag 0x{tag:02x}")]
    UnknownTag { format: &'static str, tag: u8 },

    /// A stream satisfied magic/version checks but is otherwise inconsistent.
    #[error("malformed {format}: {msg}")]
    Malformed { format: &'static str, msg: String },

    /// A blob's hash does not match the fingerprint recorded in a manifest
    /// or feature cache.
    #[error("fingerprint mismatch: expected {expected}, got {got}")]
    FingerprintMismatch { expected: String, got: String },

    /// Loss or parameters became non-finite.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Invalid hyperparameter, arch description, or argument domain.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn state(msg: impl Into<String>) -> Self {
        Error::State(msg.into())
    }
}
