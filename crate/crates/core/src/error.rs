//! Error types shared across the engine.

use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, EngineError>;

/// Errors produced by store, embedding, gateway, and harness operations.
#[derive(Debug, Error)]
pub enum EngineError {
    /// A vector's length does not match the store's configured dimension.
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// An id was supplied that the store has already issued.
    #[error("note id {0} was already issued and ids are never reused")]
    DuplicateId(u64),

    #[error("note {0} not found")]
    NoteNotFound(u64),

    #[error("cluster {0} not found")]
    ClusterNotFound(u64),

    /// A caller violated an argument precondition (empty text, k too large, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A snapshot file is corrupt, truncated, or has an unsupported version.
    #[error("snapshot load failed: {0}")]
    SnapshotFormat(String),

    /// A dataset record could not be parsed.
    #[error("dataset error: {0}")]
    Dataset(String),

    /// A remote backend (chat or embedding service) failed after retries.
    #[error("backend failure after {retries} attempt(s): {message}")]
    Backend { message: String, retries: u32 },

    /// The scripted stub received a call it has no entry for.
    #[error("scripted stub has no entry for role '{role}' (prompt starts: {prompt_head})")]
    UnscriptedCall { role: String, prompt_head: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl EngineError {
    /// Exit code the CLI maps this error to (1 usage, 2 data, 3 backend).
    pub fn exit_code(&self) -> i32 {
        match self {
            EngineError::InvalidArgument(_) | EngineError::InvalidConfig(_) => 1,
            EngineError::Backend { .. } | EngineError::UnscriptedCall { .. } => 3,
            _ => 2,
        }
    }
}
