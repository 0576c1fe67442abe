use thiserror::Error;

/// Errors produced by the fallible, user-facing entry points.
///
/// Low-level tensor algebra routines treat mismatched specs as contract
/// violations and panic instead; everything reachable from file input or
/// the CLI goes through `Result`.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid spec: channels and depth must both be at least 1")]
    InvalidSpec,
    #[error("stream too short: need at least {needed} points, got {got}")]
    StreamTooShort { needed: usize, got: usize },
    #[error("channel mismatch: expected {expected}, got {got}")]
    ChannelMismatch { expected: usize, got: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("empty input")]
    Empty,
    #[error("invalid interval [{start}, {end}] over {len} points")]
    InvalidInterval {
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("integer overflow while computing {0}")]
    Overflow(&'static str),
    #[error("unsupported: {0}")]
    Unsupported(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;
