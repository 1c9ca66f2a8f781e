//! Hash-based embedder for offline runs and tests.

use crate::error::Result;
use crate::text::{fnv1a64, tokenize};

use super::{Embedder, EmbeddingVector};

/// Embeds text by feature hashing token unigrams and bigrams into a fixed
/// number of buckets with a sign trick, then unit-normalizing. Fully
/// deterministic across processes and platforms, and texts sharing vocabulary
/// land near each other, which is all the clustering layer needs.
#[derive(Debug, Clone)]
pub struct HashedNgramEmbedder {
    dim: usize,
}

impl HashedNgramEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 2, "embedding dim must be at least 2");
        HashedNgramEmbedder { dim }
    }

    fn bump(&self, acc: &mut [f64], feature: &str, weight: f64) {
        let h = fnv1a64(feature.as_bytes());
        let bucket = (h % self.dim as u64) as usize;
        // Use a bit far from the bucket modulus as the sign so the two are
        // effectively independent.
        let sign = if (h >> 63) & 1 == 0 { 1.0 } else { -1.0 };
        acc[bucket] += sign * weight;
    }
}

impl Embedder for HashedNgramEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        let tokens = tokenize(text);
        let mut acc = vec![0.0f64; self.dim];
        for token in &tokens {
            self.bump(&mut acc, token, 1.0);
        }
        for pair in tokens.windows(2) {
            let bigram = format!("{} {}", pair[0], pair[1]);
            self.bump(&mut acc, &bigram, 0.5);
        }
        if tokens.is_empty() {
            // Blank text still needs a direction; a reserved feature gives
            // every empty input the same one.
            self.bump(&mut acc, "\u{0}empty\u{0}", 1.0);
        }
        EmbeddingVector::new(acc.iter().map(|&x| x as f32).collect())
    }
}
