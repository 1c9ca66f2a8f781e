//! Embedding vectors, cosine similarity, and the embedder abstraction.

mod deterministic;
mod remote;

pub use deterministic::HashedNgramEmbedder;
pub(crate) use remote::InFlightGate;
pub use remote::{RemoteEmbedder, RemoteEmbedderConfig};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{EngineError, Result};

/// Maximum deviation from unit norm tolerated when accepting a stored vector.
const NORM_TOLERANCE: f64 = 1e-3;

/// A unit-normalized embedding. Construction enforces the invariant, so cosine
/// similarity between two vectors is just their dot product.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(Vec<f32>);

impl EmbeddingVector {
    /// Normalize `raw` to unit length. Zero (or non-finite) vectors have no
    /// direction and are rejected.
    pub fn new(raw: Vec<f32>) -> Result<Self> {
        if raw.is_empty() {
            return Err(EngineError::InvalidArgument("empty embedding".into()));
        }
        let norm_sq: f64 = raw.iter().map(|&x| (x as f64) * (x as f64)).sum();
        if !norm_sq.is_finite() {
            return Err(EngineError::InvalidArgument(
                "embedding has non-finite components".into(),
            ));
        }
        if norm_sq == 0.0 {
            return Err(EngineError::InvalidArgument(
                "zero vector has no direction".into(),
            ));
        }
        let inv = 1.0 / norm_sq.sqrt();
        let normalized = raw.iter().map(|&x| (x as f64 * inv) as f32).collect();
        Ok(EmbeddingVector(normalized))
    }

    /// Accept an already-normalized vector without renormalizing, so values
    /// loaded from a snapshot round-trip bit for bit.
    pub fn from_unit(raw: Vec<f32>) -> Result<Self> {
        if raw.is_empty() {
            return Err(EngineError::InvalidArgument("empty embedding".into()));
        }
        let norm_sq: f64 = raw.iter().map(|&x| (x as f64) * (x as f64)).sum();
        if !norm_sq.is_finite() || (norm_sq.sqrt() - 1.0).abs() > NORM_TOLERANCE {
            return Err(EngineError::InvalidArgument(format!(
                "expected unit vector, norm was {:.6}",
                norm_sq.sqrt()
            )));
        }
        Ok(EmbeddingVector(raw))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }
}

impl Serialize for EmbeddingVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.0.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for EmbeddingVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = Vec::<f32>::deserialize(deserializer)?;
        EmbeddingVector::from_unit(raw).map_err(serde::de::Error::custom)
    }
}

/// Cosine similarity between two unit vectors (their dot product).
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(EngineError::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let dot: f64 = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(&x, &y)| x as f64 * y as f64)
        .sum();
    // Float rounding can push the product a hair outside [-1, 1].
    Ok(dot.clamp(-1.0, 1.0))
}

/// Text-to-vector backends. Implementations must be deterministic per input
/// within one engine run and always return vectors of `dim()` length.
pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<EmbeddingVector>;

    /// Batch helper; backends with a bulk endpoint override this.
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
        texts.iter().map(|t| self.embed(t)).collect()
    }
}
