//! The memory engine: cold-start buffering, one-shot k-means initialization,
//! online routing under three strategies, and adaptive cluster splitting.
//!
//! The engine owns the store, the gateway, and the configuration. It threads
//! a touch counter through every note so "most recently touched" is well
//! defined for profile snippets, and derives every k-means seed from stable
//! state so a restored engine replays identically.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::Serialize;

use crate::clustering::kmeans;
use crate::config::{EngineConfig, RoutingStrategy};
use crate::embed::{cosine_similarity, Embedder, EmbeddingVector};
use crate::error::{EngineError, Result};
use crate::evolution::EvolutionReport;
use crate::gateway::{ChatBackend, RouteCandidate, SlmGateway};
use crate::store::snapshot::{read_snapshot, write_snapshot};
use crate::store::{MemoryNote, MemoryStore, NoteDraft};
use crate::text::{fnv1a64, truncate_chars};

/// Characters of note content shown per snippet inside prompts.
pub const SNIPPET_CHARS: usize = 160;
/// Member snippets shown per candidate cluster during routing and retrieval.
const ROUTE_SNIPPETS: usize = 3;
/// Member snippets used to build or refresh a cluster profile.
const PROFILE_SNIPPET_COUNT: usize = 5;

/// What happened to one ingested note at the routing layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RouteDecision {
    /// Held in the cold-start buffer; no cluster yet.
    Buffered,
    /// Joined an existing cluster.
    Routed,
    /// Rejected by the similarity threshold; opened a fresh singleton.
    NewCluster,
}

#[derive(Debug, Clone, Serialize)]
pub struct RoutingOutcome {
    pub decision: RouteDecision,
    pub cluster_id: Option<u64>,
    /// Cosine between the note and the chosen cluster's centroid.
    pub similarity: Option<f64>,
    /// Candidate cluster ids shown to the router, nearest first.
    pub candidates_considered: Vec<u64>,
}

/// Everything one `ingest` call did, in the order it happened.
#[derive(Debug, Clone, Serialize)]
pub struct IngestOutcome {
    pub note_id: u64,
    pub routing: RoutingOutcome,
    /// True when this note filled the buffer and initialization fired.
    pub initialized: bool,
    /// Present for every note routed after initialization.
    pub evolution: Option<EvolutionReport>,
    /// Ids of clusters created by splits during this ingestion step.
    pub splits: Vec<u64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClusterStat {
    pub cluster_id: u64,
    pub size: usize,
    pub summary: String,
    pub tags: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EngineStats {
    pub initialized: bool,
    pub processed: u64,
    pub note_count: usize,
    /// Notes still waiting in the cold-start buffer.
    pub buffered_count: usize,
    pub cluster_count: usize,
    pub size_mean: f64,
    pub size_std: f64,
    pub size_min: usize,
    pub size_max: usize,
    pub clusters: Vec<ClusterStat>,
}

/// Self-organizing memory over a note store, an SLM gateway, and a config.
pub struct MemoryEngine {
    pub(crate) store: MemoryStore,
    pub(crate) gateway: SlmGateway,
    pub(crate) config: EngineConfig,
    /// Note id to monotone touch sequence; drives recency-based snippet picks.
    pub(crate) touch: BTreeMap<u64, u64>,
    pub(crate) touch_counter: u64,
    /// Query-annotation memo so repeated queries cost one model call.
    pub(crate) query_tags: Mutex<BTreeMap<String, Vec<String>>>,
}

impl MemoryEngine {
    pub fn new(
        config: EngineConfig,
        embedder: Arc<dyn Embedder>,
        backend: Arc<dyn ChatBackend>,
    ) -> Result<Self> {
        config.validate()?;
        if embedder.dim() != config.embedding_dim {
            return Err(EngineError::InvalidConfig(format!(
                "embedder dimension {} != configured embedding_dim {}",
                embedder.dim(),
                config.embedding_dim
            )));
        }
        let store = MemoryStore::new(embedder);
        Self::from_parts(config, store, backend)
    }

    /// Wrap an existing store. The store's notes seed the touch sequence in
    /// id order, so recency degrades gracefully to insertion order.
    pub fn from_parts(
        config: EngineConfig,
        mut store: MemoryStore,
        backend: Arc<dyn ChatBackend>,
    ) -> Result<Self> {
        config.validate()?;
        if store.dim() != config.embedding_dim {
            return Err(EngineError::InvalidConfig(format!(
                "store dimension {} != configured embedding_dim {}",
                store.dim(),
                config.embedding_dim
            )));
        }
        if config.routing_strategy == RoutingStrategy::KmeansFixed {
            store.freeze_centroids();
        }
        let touch: BTreeMap<u64, u64> = store.note_ids().into_iter().map(|id| (id, id)).collect();
        let touch_counter = store.next_note_id();
        Ok(MemoryEngine {
            store,
            gateway: SlmGateway::new(backend),
            config,
            touch,
            touch_counter,
            query_tags: Mutex::new(BTreeMap::new()),
        })
    }

    pub fn from_snapshot(
        path: &Path,
        embedder: Arc<dyn Embedder>,
        backend: Arc<dyn ChatBackend>,
    ) -> Result<Self> {
        let (store, config) = read_snapshot(path, embedder)?;
        Self::from_parts(config, store, backend)
    }

    pub fn snapshot(&self, path: &Path) -> Result<()> {
        write_snapshot(&self.store, &self.config, path)
    }

    pub fn store(&self) -> &MemoryStore {
        &self.store
    }

    pub fn gateway(&self) -> &SlmGateway {
        &self.gateway
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    /// True once initialization has produced clusters.
    pub fn initialized(&self) -> bool {
        self.store.cluster_count() > 0
    }

    pub(crate) fn touch_note(&mut self, note_id: u64) {
        self.touch_counter += 1;
        self.touch.insert(note_id, self.touch_counter);
    }

    /// Seed for one named random draw. Mixing the configured seed with the
    /// ingestion counter and the cluster id watermark keeps draws distinct
    /// across the run yet identical after a snapshot restore.
    pub(crate) fn derived_seed(&self, label: &str) -> u64 {
        let mut bytes = Vec::with_capacity(label.len() + 24);
        bytes.extend_from_slice(&self.config.rng_seed.to_le_bytes());
        bytes.extend_from_slice(label.as_bytes());
        bytes.extend_from_slice(&self.store.processed().to_le_bytes());
        bytes.extend_from_slice(&self.store.next_cluster_id().to_le_bytes());
        fnv1a64(&bytes)
    }

    /// Annotate, embed, store, and route one memory. Runs the split check
    /// after a join and evolution for every post-initialization note.
    pub fn ingest(&mut self, content: &str, timestamp: &str) -> Result<IngestOutcome> {
        let annotation = self.gateway.annotate_note(content)?;
        let embedding = self
            .store
            .embedder()
            .embed(&MemoryNote::embed_text(content, &annotation.context))?;
        let phase_a = self.store.cluster_count() == 0
            && self.store.processed() < self.config.init_buffer_size as u64;
        let note_id = self.store.put_note(NoteDraft {
            content: content.to_string(),
            timestamp: timestamp.to_string(),
            keywords: annotation.keywords,
            tags: annotation.tags,
            context: annotation.context,
            embedding,
        })?;
        self.touch_note(note_id);
        self.store.bump_processed();

        let mut initialized = false;
        let mut splits = Vec::new();
        let mut evolution = None;
        let routing = if phase_a {
            if self.store.unassigned_ids().len() >= self.config.init_buffer_size {
                self.initialize_clusters()?;
                initialized = true;
                if self.config.routing_strategy != RoutingStrategy::KmeansFixed {
                    splits = self.split_sweep()?;
                }
            }
            RoutingOutcome {
                decision: RouteDecision::Buffered,
                cluster_id: None,
                similarity: None,
                candidates_considered: Vec::new(),
            }
        } else {
            let outcome = self.route_note(note_id)?;
            if outcome.decision == RouteDecision::Routed
                && self.config.routing_strategy != RoutingStrategy::KmeansFixed
            {
                splits = self.split_sweep()?;
            }
            evolution = Some(self.run_evolution(note_id)?);
            outcome
        };

        Ok(IngestOutcome {
            note_id,
            routing,
            initialized,
            evolution,
            splits,
        })
    }

    /// Partition the cold-start buffer into up to `init_clusters` groups and
    /// promote each to a cluster with a generated profile.
    pub fn initialize_clusters(&mut self) -> Result<Vec<u64>> {
        let buffer = self.store.unassigned_ids();
        if buffer.is_empty() {
            return Err(EngineError::InvalidArgument(
                "no buffered notes to initialize from".into(),
            ));
        }
        // A buffer smaller than init_clusters caps k; the contract already
        // allows fewer groups when some come back empty.
        let k = self.config.init_clusters.min(buffer.len());
        let seed = self.derived_seed("init");
        let result = {
            let embeddings: Vec<&EmbeddingVector> = buffer
                .iter()
                .map(|&id| self.store.note_required(id).map(|n| &n.embedding))
                .collect::<Result<_>>()?;
            kmeans(&embeddings, k, seed)?
        };
        let mut groups: Vec<Vec<u64>> = vec![Vec::new(); k];
        for (i, &note_id) in buffer.iter().enumerate() {
            groups[result.assignments[i]].push(note_id);
        }
        let mut created = Vec::new();
        for group in groups.into_iter().filter(|g| !g.is_empty()) {
            let snippets = self.profile_snippets(&group);
            let profile = self.gateway.generate_profile(&snippets)?;
            created.push(self.store.create_cluster(group, profile)?);
        }
        Ok(created)
    }

    /// Bisect an oversized cluster into two fresh clusters. No-op (returning
    /// an empty list) when the size bound holds or the geometry degenerates
    /// to an empty side.
    pub fn split_cluster(&mut self, cluster_id: u64) -> Result<Vec<u64>> {
        let members = self.store.cluster_required(cluster_id)?.member_ids.clone();
        if members.len() <= self.config.split_threshold {
            return Ok(Vec::new());
        }
        let seed = self.derived_seed(&format!("split:{cluster_id}"));
        let result = {
            let embeddings: Vec<&EmbeddingVector> = members
                .iter()
                .map(|&id| self.store.note_required(id).map(|n| &n.embedding))
                .collect::<Result<_>>()?;
            kmeans(&embeddings, 2, seed)?
        };
        let mut sides: [Vec<u64>; 2] = [Vec::new(), Vec::new()];
        for (i, &note_id) in members.iter().enumerate() {
            sides[result.assignments[i]].push(note_id);
        }
        if sides.iter().any(|side| side.is_empty()) {
            return Ok(Vec::new());
        }
        // Profiles are generated before any structural change so a gateway
        // failure cannot leave the parent half-retired.
        let mut profiles = Vec::with_capacity(2);
        for side in &sides {
            let snippets = self.profile_snippets(side);
            profiles.push(self.gateway.generate_profile(&snippets)?);
        }
        self.store.retire_cluster(cluster_id)?;
        let mut children = Vec::with_capacity(2);
        for (side, profile) in sides.into_iter().zip(profiles) {
            children.push(self.store.create_cluster(side, profile)?);
        }
        Ok(children)
    }

    /// Split oversized clusters, smallest id first, until the size bound
    /// holds everywhere. Clusters that refuse to split (degenerate geometry)
    /// are skipped rather than retried forever.
    pub(crate) fn split_sweep(&mut self) -> Result<Vec<u64>> {
        let mut created = Vec::new();
        let mut gave_up: BTreeSet<u64> = BTreeSet::new();
        loop {
            let next = self
                .store
                .clusters()
                .find(|c| c.len() > self.config.split_threshold && !gave_up.contains(&c.cluster_id))
                .map(|c| c.cluster_id);
            let Some(cluster_id) = next else {
                return Ok(created);
            };
            let children = self.split_cluster(cluster_id)?;
            if children.is_empty() {
                gave_up.insert(cluster_id);
            } else {
                created.extend(children);
            }
        }
    }

    /// All clusters ranked by centroid cosine against `embedding`, nearest
    /// first, ties to the smaller id, truncated to `k`.
    pub fn nearest_clusters(
        &self,
        embedding: &EmbeddingVector,
        k: usize,
    ) -> Result<Vec<(u64, f64)>> {
        let mut ranked = Vec::with_capacity(self.store.cluster_count());
        for cluster in self.store.clusters() {
            let similarity = cosine_similarity(embedding, &cluster.centroid)?;
            ranked.push((cluster.cluster_id, similarity));
        }
        ranked.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.0.cmp(&b.0))
        });
        ranked.truncate(k);
        Ok(ranked)
    }

    /// Carry out Phase B routing for a freshly stored, still unassigned note.
    fn route_note(&mut self, note_id: u64) -> Result<RoutingOutcome> {
        let (embedding, content, context, tags) = {
            let note = self.store.note_required(note_id)?;
            (
                note.embedding.clone(),
                note.content.clone(),
                note.context.clone(),
                note.tags.clone(),
            )
        };
        let ranked = self.nearest_clusters(&embedding, self.config.routing_candidates)?;
        if ranked.is_empty() {
            // Phase B with zero clusters only happens on hand-built stores;
            // a singleton keeps the note from being stranded.
            let cluster_id = self.create_singleton(note_id)?;
            return Ok(RoutingOutcome {
                decision: RouteDecision::NewCluster,
                cluster_id: Some(cluster_id),
                similarity: None,
                candidates_considered: Vec::new(),
            });
        }
        let candidates_considered: Vec<u64> = ranked.iter().map(|r| r.0).collect();

        if self.config.routing_strategy == RoutingStrategy::KmeansFixed {
            let (cluster_id, similarity) = ranked[0];
            self.store.assign_frozen(note_id, cluster_id)?;
            return Ok(RoutingOutcome {
                decision: RouteDecision::Routed,
                cluster_id: Some(cluster_id),
                similarity: Some(similarity),
                candidates_considered,
            });
        }

        let (cluster_id, similarity) = match self.config.routing_strategy {
            RoutingStrategy::Agentic => {
                let candidates = self.route_candidates(&ranked);
                let choice = self
                    .gateway
                    .select_cluster(&content, &context, &tags, &candidates)?;
                let similarity = ranked
                    .iter()
                    .find(|r| r.0 == choice.cluster_id)
                    .map(|r| r.1)
                    .expect("selected cluster comes from the candidate list");
                (choice.cluster_id, similarity)
            }
            RoutingStrategy::CosineGreedy => ranked[0],
            RoutingStrategy::KmeansFixed => unreachable!("handled above"),
        };

        if similarity < self.config.new_cluster_threshold {
            let new_id = self.create_singleton(note_id)?;
            Ok(RoutingOutcome {
                decision: RouteDecision::NewCluster,
                cluster_id: Some(new_id),
                similarity: Some(similarity),
                candidates_considered,
            })
        } else {
            self.store.assign_to_cluster(note_id, cluster_id)?;
            Ok(RoutingOutcome {
                decision: RouteDecision::Routed,
                cluster_id: Some(cluster_id),
                similarity: Some(similarity),
                candidates_considered,
            })
        }
    }

    fn create_singleton(&mut self, note_id: u64) -> Result<u64> {
        let snippets = self.profile_snippets(&[note_id]);
        let profile = self.gateway.generate_profile(&snippets)?;
        self.store.create_cluster(vec![note_id], profile)
    }

    /// Present ranked clusters to the model: profile plus the three most
    /// recently added members' contents.
    pub(crate) fn route_candidates(&self, ranked: &[(u64, f64)]) -> Vec<RouteCandidate> {
        ranked
            .iter()
            .map(|&(cluster_id, similarity)| {
                let cluster = self
                    .store
                    .cluster(cluster_id)
                    .expect("ranked cluster exists");
                let snippets = cluster
                    .member_ids
                    .iter()
                    .rev()
                    .take(ROUTE_SNIPPETS)
                    .filter_map(|&id| self.store.note(id))
                    .map(|n| truncate_chars(&n.content, SNIPPET_CHARS))
                    .collect();
                RouteCandidate {
                    cluster_id,
                    summary: cluster.profile.summary.clone(),
                    tags: cluster.profile.tags.clone(),
                    snippets,
                    similarity,
                }
            })
            .collect()
    }

    /// Contents of the most recently touched members, for profile prompts.
    pub(crate) fn profile_snippets(&self, member_ids: &[u64]) -> Vec<String> {
        let mut by_recency: Vec<u64> = member_ids.to_vec();
        by_recency.sort_by_key(|id| std::cmp::Reverse(self.touch.get(id).copied().unwrap_or(*id)));
        by_recency.truncate(PROFILE_SNIPPET_COUNT);
        by_recency
            .iter()
            .filter_map(|&id| self.store.note(id))
            .map(|n| truncate_chars(&n.content, SNIPPET_CHARS))
            .collect()
    }

    pub fn stats(&self) -> EngineStats {
        let sizes: Vec<usize> = self.store.clusters().map(|c| c.len()).collect();
        let cluster_count = sizes.len();
        let (size_mean, size_std) = if cluster_count == 0 {
            (0.0, 0.0)
        } else {
            let mean = sizes.iter().sum::<usize>() as f64 / cluster_count as f64;
            let variance = sizes
                .iter()
                .map(|&s| (s as f64 - mean).powi(2))
                .sum::<f64>()
                / cluster_count as f64;
            (mean, variance.sqrt())
        };
        EngineStats {
            initialized: self.initialized(),
            processed: self.store.processed(),
            note_count: self.store.note_count(),
            buffered_count: self.store.unassigned_ids().len(),
            cluster_count,
            size_mean,
            size_std,
            size_min: sizes.iter().copied().min().unwrap_or(0),
            size_max: sizes.iter().copied().max().unwrap_or(0),
            clusters: self
                .store
                .clusters()
                .map(|c| ClusterStat {
                    cluster_id: c.cluster_id,
                    size: c.len(),
                    summary: c.profile.summary.clone(),
                    tags: c.profile.tags.clone(),
                })
                .collect(),
        }
    }
}
