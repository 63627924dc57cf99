use std::io;

use thiserror::Error;

pub type Result<T, E = CovrlError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CovrlError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("coverage map size mismatch: expected {expected} entries, got {actual}")]
    SizeMismatch { expected: usize, actual: usize },

    /// The weight map cannot be computed before any edge has been seen.
    #[error("reward weighting not initialized: no unique coverage yet (N = 0)")]
    NotInitialized,

    #[error("corrupt campaign state: {0}")]
    CorruptState(String),

    #[error("mutator protocol violation: {0}")]
    Protocol(String),

    #[error("mutator transport failure: {0}")]
    Transport(#[source] io::Error),

    #[error("target fatal: {0}")]
    Target(String),

    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl CovrlError {
    pub fn config(msg: impl Into<String>) -> Self {
        CovrlError::Config(msg.into())
    }
}
