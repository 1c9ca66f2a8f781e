//! Engine configuration: clustering, routing, evolution, and retrieval knobs.

use serde::{Deserialize, Serialize};

use crate::error::{EngineError, Result};

/// How a new memory is assigned to a cluster once the engine is initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoutingStrategy {
    /// Candidate pre-filter by centroid similarity, final pick by the model.
    Agentic,
    /// Highest-centroid-cosine candidate wins outright.
    CosineGreedy,
    /// Nearest centroid, no novelty threshold, structure frozen after init.
    KmeansFixed,
}

/// Whether evolution ranks neighbors within the routed cluster or store-wide.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvolutionScope {
    Local,
    Global,
}

/// Cluster-filtered retrieval versus a flat scan of the whole store.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrievalMode {
    TwoStage,
    Global,
}

/// All engine hyperparameters plus ablation and strategy switches.
///
/// `default()` carries the reference hyperparameters; `desk_default()` shrinks
/// the buffer and split threshold so small test corpora exercise every phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    /// Memories buffered before the one-shot k-means initialization fires.
    pub init_buffer_size: usize,
    /// Number of clusters created at initialization.
    pub init_clusters: usize,
    /// A cluster splits when its size exceeds this bound.
    pub split_threshold: usize,
    /// Candidate clusters shown to the router per new memory.
    pub routing_candidates: usize,
    /// Minimum cosine to the chosen centroid before a new cluster is created.
    pub new_cluster_threshold: f64,
    /// Intra-cluster neighbors considered for linking and evolution.
    pub local_neighbors: usize,
    /// Candidate clusters presented to stage-1 selection at query time.
    pub stage1_candidates: usize,
    /// Final retrieval top-k.
    pub retrieve_top_k: usize,
    pub routing_strategy: RoutingStrategy,
    pub evolution_scope: EvolutionScope,
    pub retrieval_mode: RetrievalMode,
    /// Seed for every random draw the engine makes (k-means seeding).
    pub rng_seed: u64,
    /// Embedding dimension, fixed for the engine's lifetime.
    pub embedding_dim: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            init_buffer_size: 100,
            init_clusters: 3,
            split_threshold: 300,
            routing_candidates: 3,
            new_cluster_threshold: 0.1,
            local_neighbors: 5,
            stage1_candidates: 3,
            retrieve_top_k: 10,
            routing_strategy: RoutingStrategy::Agentic,
            evolution_scope: EvolutionScope::Local,
            retrieval_mode: RetrievalMode::TwoStage,
            rng_seed: 0,
            embedding_dim: 128,
        }
    }
}

impl EngineConfig {
    /// Desk-scale variant: small buffer and split threshold so short synthetic
    /// streams reach initialization and splitting quickly.
    pub fn desk_default() -> Self {
        EngineConfig {
            init_buffer_size: 30,
            split_threshold: 50,
            ..EngineConfig::default()
        }
    }

    /// Check the value constraints; call after construction or deserialization.
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("init_buffer_size", self.init_buffer_size),
            ("init_clusters", self.init_clusters),
            ("split_threshold", self.split_threshold),
            ("routing_candidates", self.routing_candidates),
            ("local_neighbors", self.local_neighbors),
            ("stage1_candidates", self.stage1_candidates),
            ("retrieve_top_k", self.retrieve_top_k),
            ("embedding_dim", self.embedding_dim),
        ];
        for (name, value) in counts {
            if value < 1 {
                return Err(EngineError::InvalidConfig(format!("{name} must be >= 1")));
            }
        }
        if !(-1.0..=1.0).contains(&self.new_cluster_threshold) {
            return Err(EngineError::InvalidConfig(
                "new_cluster_threshold must lie in [-1, 1]".into(),
            ));
        }
        if self.split_threshold <= self.init_clusters {
            return Err(EngineError::InvalidConfig(
                "split_threshold must exceed init_clusters".into(),
            ));
        }
        Ok(())
    }

    /// Parse a flat key-value TOML document whose keys mirror the field names.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: EngineConfig = toml::from_str(text)
            .map_err(|e| EngineError::InvalidConfig(format!("config parse: {e}")))?;
        config.validate()?;
        Ok(config)
    }
}
