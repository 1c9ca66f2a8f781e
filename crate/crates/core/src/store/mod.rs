//! Note and cluster data model plus the single-writer memory store.

pub mod snapshot;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::embed::{Embedder, EmbeddingVector};
use crate::error::{EngineError, Result};

/// One stored experience plus its agent-generated annotations and links.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryNote {
    pub id: u64,
    pub content: String,
    pub cluster_id: Option<u64>,
    pub timestamp: String,
    pub keywords: Vec<String>,
    pub tags: Vec<String>,
    pub context: String,
    pub links: BTreeSet<u64>,
    pub embedding: EmbeddingVector,
}

impl MemoryNote {
    /// Text fed to the embedder: content plus the contextual description, so
    /// annotation revisions shift the note's position.
    pub fn embed_text(content: &str, context: &str) -> String {
        if context.is_empty() {
            content.to_string()
        } else {
            format!("{content}\n{context}")
        }
    }
}

/// One-sentence topic summary plus exactly three single-word tags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterProfile {
    pub summary: String,
    pub tags: Vec<String>,
}

/// A member-note set with centroid and profile.
#[derive(Debug, Clone)]
pub struct Cluster {
    pub cluster_id: u64,
    pub member_ids: Vec<u64>,
    pub centroid: EmbeddingVector,
    pub profile: ClusterProfile,
    /// Ingestion counter value when this cluster was created.
    pub created_at: u64,
    /// Running component sum of member embeddings; the centroid is this sum
    /// renormalized. Rebuilt from members on split and restore.
    sum: Vec<f64>,
}

impl Cluster {
    pub fn len(&self) -> usize {
        self.member_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.member_ids.is_empty()
    }
}

/// Fields a new note carries before the store assigns its id.
#[derive(Debug, Clone)]
pub struct NoteDraft {
    pub content: String,
    pub timestamp: String,
    pub keywords: Vec<String>,
    pub tags: Vec<String>,
    pub context: String,
    pub embedding: EmbeddingVector,
}

/// Partial update; absent fields are left alone. Note id and timestamp are
/// immutable by construction.
#[derive(Debug, Clone, Default)]
pub struct NotePatch {
    pub content: Option<String>,
    pub keywords: Option<Vec<String>>,
    pub tags: Option<Vec<String>>,
    pub context: Option<String>,
    pub links: Option<BTreeSet<u64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccessKind {
    Read,
    Write,
}

/// One note-level store access, recorded when the log is enabled.
#[derive(Debug, Clone)]
pub struct AccessRecord {
    pub section: String,
    pub kind: AccessKind,
    pub note_id: u64,
}

#[derive(Default)]
struct AccessLogState {
    section: String,
    records: Vec<AccessRecord>,
}

/// Append-and-update memory store. All mutation goes through `&mut self`
/// (single writer); reads are concurrent-safe over a quiescent store.
pub struct MemoryStore {
    embedder: Arc<dyn Embedder>,
    notes: BTreeMap<u64, MemoryNote>,
    clusters: BTreeMap<u64, Cluster>,
    next_note_id: u64,
    next_cluster_id: u64,
    processed: u64,
    /// When set, centroids keep the direction they had at cluster creation;
    /// membership changes and re-embeds update only the running sums.
    centroids_frozen: bool,
    log_enabled: AtomicBool,
    access_log: Mutex<AccessLogState>,
}

impl MemoryStore {
    pub fn new(embedder: Arc<dyn Embedder>) -> Self {
        MemoryStore {
            embedder,
            notes: BTreeMap::new(),
            clusters: BTreeMap::new(),
            next_note_id: 0,
            next_cluster_id: 0,
            processed: 0,
            centroids_frozen: false,
            log_enabled: AtomicBool::new(false),
            access_log: Mutex::new(AccessLogState::default()),
        }
    }

    /// Pin every centroid to its creation-time direction. Used by the
    /// frozen-partition baseline strategy; there is no unfreeze.
    pub fn freeze_centroids(&mut self) {
        self.centroids_frozen = true;
    }

    pub fn centroids_frozen(&self) -> bool {
        self.centroids_frozen
    }

    pub fn dim(&self) -> usize {
        self.embedder.dim()
    }

    pub fn embedder(&self) -> Arc<dyn Embedder> {
        Arc::clone(&self.embedder)
    }

    pub fn note_count(&self) -> usize {
        self.notes.len()
    }

    pub fn cluster_count(&self) -> usize {
        self.clusters.len()
    }

    pub fn processed(&self) -> u64 {
        self.processed
    }

    pub fn bump_processed(&mut self) {
        self.processed += 1;
    }

    pub fn next_note_id(&self) -> u64 {
        self.next_note_id
    }

    pub fn next_cluster_id(&self) -> u64 {
        self.next_cluster_id
    }

    // ---- access log ----------------------------------------------------

    pub fn enable_access_log(&self) {
        self.log_enabled.store(true, Ordering::SeqCst);
    }

    pub fn disable_access_log(&self) {
        self.log_enabled.store(false, Ordering::SeqCst);
    }

    /// Label subsequent logged accesses (e.g. "evolution").
    pub fn set_access_section(&self, section: &str) {
        self.access_log.lock().unwrap().section = section.to_string();
    }

    pub fn access_records(&self) -> Vec<AccessRecord> {
        self.access_log.lock().unwrap().records.clone()
    }

    pub fn clear_access_log(&self) {
        self.access_log.lock().unwrap().records.clear();
    }

    fn log_access(&self, kind: AccessKind, note_id: u64) {
        if !self.log_enabled.load(Ordering::Relaxed) {
            return;
        }
        let mut state = self.access_log.lock().unwrap();
        let section = state.section.clone();
        state.records.push(AccessRecord {
            section,
            kind,
            note_id,
        });
    }

    // ---- notes ----------------------------------------------------------

    /// Insert a new note; the returned id is strictly greater than every id
    /// handed out before, including deleted ones.
    pub fn put_note(&mut self, draft: NoteDraft) -> Result<u64> {
        if draft.embedding.dim() != self.dim() {
            return Err(EngineError::DimensionMismatch {
                expected: self.dim(),
                got: draft.embedding.dim(),
            });
        }
        let id = self.next_note_id;
        self.next_note_id += 1;
        self.notes.insert(
            id,
            MemoryNote {
                id,
                content: draft.content,
                cluster_id: None,
                timestamp: draft.timestamp,
                keywords: draft.keywords,
                tags: draft.tags,
                context: draft.context,
                links: BTreeSet::new(),
                embedding: draft.embedding,
            },
        );
        Ok(id)
    }

    /// Lookup that records a read in the access log when enabled.
    pub fn note(&self, id: u64) -> Option<&MemoryNote> {
        let found = self.notes.get(&id);
        if found.is_some() {
            self.log_access(AccessKind::Read, id);
        }
        found
    }

    pub fn note_required(&self, id: u64) -> Result<&MemoryNote> {
        self.note(id).ok_or(EngineError::NoteNotFound(id))
    }

    /// Iterate notes in id order. Bulk traversal; not recorded per note.
    pub fn notes(&self) -> impl Iterator<Item = &MemoryNote> {
        self.notes.values()
    }

    pub fn note_ids(&self) -> Vec<u64> {
        self.notes.keys().copied().collect()
    }

    /// Ids of notes not yet assigned to any cluster (the cold-start buffer).
    pub fn unassigned_ids(&self) -> Vec<u64> {
        self.notes
            .values()
            .filter(|n| n.cluster_id.is_none())
            .map(|n| n.id)
            .collect()
    }

    /// Apply a patch. Content or context changes re-embed the note and refresh
    /// the owning cluster's centroid.
    pub fn update_note(&mut self, id: u64, patch: NotePatch) -> Result<&MemoryNote> {
        if !self.notes.contains_key(&id) {
            return Err(EngineError::NoteNotFound(id));
        }
        if let Some(links) = &patch.links {
            if links.contains(&id) {
                return Err(EngineError::InvalidArgument(format!(
                    "note {id} cannot link to itself"
                )));
            }
            for target in links {
                if !self.notes.contains_key(target) {
                    return Err(EngineError::NoteNotFound(*target));
                }
            }
        }
        let note = self.notes.get_mut(&id).unwrap();
        let text_changed = patch
            .content
            .as_ref()
            .map(|c| *c != note.content)
            .unwrap_or(false)
            || patch
                .context
                .as_ref()
                .map(|x| *x != note.context)
                .unwrap_or(false);
        if let Some(content) = patch.content {
            note.content = content;
        }
        if let Some(keywords) = patch.keywords {
            note.keywords = keywords;
        }
        if let Some(tags) = patch.tags {
            note.tags = tags;
        }
        if let Some(context) = patch.context {
            note.context = context;
        }
        if let Some(links) = patch.links {
            note.links = links;
        }
        if text_changed {
            let new_embedding = self
                .embedder
                .embed(&MemoryNote::embed_text(&note.content, &note.context))?;
            let old_embedding = std::mem::replace(&mut note.embedding, new_embedding);
            let owner = note.cluster_id;
            let new_copy = self.notes[&id].embedding.clone();
            if let Some(cluster_id) = owner {
                self.swap_member_embedding(cluster_id, &old_embedding, &new_copy)?;
            }
        }
        self.log_access(AccessKind::Write, id);
        Ok(&self.notes[&id])
    }

    /// Remove a note, dropping dangling links to it and the owning cluster if
    /// this was its last member. Maintenance utility; ids are never reused.
    pub fn delete_note(&mut self, id: u64) -> Result<MemoryNote> {
        let note = self
            .notes
            .remove(&id)
            .ok_or(EngineError::NoteNotFound(id))?;
        if let Some(cluster_id) = note.cluster_id {
            let drop_cluster = {
                let cluster = self
                    .clusters
                    .get_mut(&cluster_id)
                    .ok_or(EngineError::ClusterNotFound(cluster_id))?;
                cluster.member_ids.retain(|&m| m != id);
                cluster.is_empty()
            };
            if drop_cluster {
                self.clusters.remove(&cluster_id);
            } else {
                self.recompute_centroid(cluster_id)?;
            }
        }
        for other in self.notes.values_mut() {
            other.links.remove(&id);
        }
        Ok(note)
    }

    // ---- clusters -------------------------------------------------------

    /// Create a cluster over existing unassigned notes. Centroid is the
    /// renormalized mean of member embeddings; `created_at` records the
    /// current ingestion counter.
    pub fn create_cluster(&mut self, member_ids: Vec<u64>, profile: ClusterProfile) -> Result<u64> {
        if member_ids.is_empty() {
            return Err(EngineError::InvalidArgument(
                "cluster must have at least one member".into(),
            ));
        }
        let mut seen = BTreeSet::new();
        for &id in &member_ids {
            if !seen.insert(id) {
                return Err(EngineError::DuplicateId(id));
            }
            let note = self.notes.get(&id).ok_or(EngineError::NoteNotFound(id))?;
            if let Some(owner) = note.cluster_id {
                return Err(EngineError::InvalidArgument(format!(
                    "note {id} already belongs to cluster {owner}"
                )));
            }
        }
        let cluster_id = self.next_cluster_id;
        self.next_cluster_id += 1;
        let sum = self.member_sum(&member_ids);
        let centroid = self
            .renormalize(&sum)
            .unwrap_or_else(|| self.notes[&member_ids[0]].embedding.clone());
        for &id in &member_ids {
            self.notes.get_mut(&id).unwrap().cluster_id = Some(cluster_id);
        }
        self.clusters.insert(
            cluster_id,
            Cluster {
                cluster_id,
                member_ids,
                centroid,
                profile,
                created_at: self.processed,
                sum,
            },
        );
        Ok(cluster_id)
    }

    pub fn cluster(&self, id: u64) -> Option<&Cluster> {
        self.clusters.get(&id)
    }

    pub fn cluster_required(&self, id: u64) -> Result<&Cluster> {
        self.clusters
            .get(&id)
            .ok_or(EngineError::ClusterNotFound(id))
    }

    /// Iterate clusters in id order.
    pub fn clusters(&self) -> impl Iterator<Item = &Cluster> {
        self.clusters.values()
    }

    pub fn cluster_ids(&self) -> Vec<u64> {
        self.clusters.keys().copied().collect()
    }

    /// Add an unassigned note to an existing cluster, updating the centroid
    /// incrementally.
    pub fn assign_to_cluster(&mut self, note_id: u64, cluster_id: u64) -> Result<()> {
        let note = self
            .notes
            .get(&note_id)
            .ok_or(EngineError::NoteNotFound(note_id))?;
        if let Some(owner) = note.cluster_id {
            return Err(EngineError::InvalidArgument(format!(
                "note {note_id} already belongs to cluster {owner}"
            )));
        }
        let embedding = note.embedding.clone();
        if !self.clusters.contains_key(&cluster_id) {
            return Err(EngineError::ClusterNotFound(cluster_id));
        }
        self.notes.get_mut(&note_id).unwrap().cluster_id = Some(cluster_id);
        let fallback = {
            let cluster = self.clusters.get_mut(&cluster_id).unwrap();
            cluster.member_ids.push(note_id);
            for (slot, &x) in cluster.sum.iter_mut().zip(embedding.as_slice()) {
                *slot += x as f64;
            }
            cluster.centroid.clone()
        };
        let renormalized = {
            let cluster = &self.clusters[&cluster_id];
            self.renormalize(&cluster.sum)
        };
        self.clusters.get_mut(&cluster_id).unwrap().centroid = renormalized.unwrap_or(fallback);
        Ok(())
    }

    /// Add an unassigned note to a cluster without touching the centroid.
    /// The running sum stays accurate so a later recompute is still possible;
    /// only the frozen-centroid baseline strategy routes through here.
    pub fn assign_frozen(&mut self, note_id: u64, cluster_id: u64) -> Result<()> {
        let note = self
            .notes
            .get(&note_id)
            .ok_or(EngineError::NoteNotFound(note_id))?;
        if let Some(owner) = note.cluster_id {
            return Err(EngineError::InvalidArgument(format!(
                "note {note_id} already belongs to cluster {owner}"
            )));
        }
        let embedding = note.embedding.clone();
        let cluster = self
            .clusters
            .get_mut(&cluster_id)
            .ok_or(EngineError::ClusterNotFound(cluster_id))?;
        cluster.member_ids.push(note_id);
        for (slot, &x) in cluster.sum.iter_mut().zip(embedding.as_slice()) {
            *slot += x as f64;
        }
        self.notes.get_mut(&note_id).unwrap().cluster_id = Some(cluster_id);
        Ok(())
    }

    /// Remove a cluster, detaching its members (they become unassigned).
    /// Member ids are returned for reassignment. Used by splitting.
    pub fn retire_cluster(&mut self, cluster_id: u64) -> Result<Vec<u64>> {
        let cluster = self
            .clusters
            .remove(&cluster_id)
            .ok_or(EngineError::ClusterNotFound(cluster_id))?;
        for id in &cluster.member_ids {
            if let Some(note) = self.notes.get_mut(id) {
                note.cluster_id = None;
            }
        }
        Ok(cluster.member_ids)
    }

    pub fn set_profile(&mut self, cluster_id: u64, profile: ClusterProfile) -> Result<()> {
        let cluster = self
            .clusters
            .get_mut(&cluster_id)
            .ok_or(EngineError::ClusterNotFound(cluster_id))?;
        cluster.profile = profile;
        Ok(())
    }

    /// Rebuild a cluster's running sum, and its centroid unless centroids are
    /// frozen.
    pub fn recompute_centroid(&mut self, cluster_id: u64) -> Result<()> {
        let member_ids = self
            .clusters
            .get(&cluster_id)
            .ok_or(EngineError::ClusterNotFound(cluster_id))?
            .member_ids
            .clone();
        let sum = self.member_sum(&member_ids);
        let centroid = if self.centroids_frozen {
            None
        } else {
            self.renormalize(&sum)
        };
        let cluster = self.clusters.get_mut(&cluster_id).unwrap();
        cluster.sum = sum;
        if let Some(c) = centroid {
            cluster.centroid = c;
        }
        Ok(())
    }

    fn member_sum(&self, member_ids: &[u64]) -> Vec<f64> {
        let mut sum = vec![0.0f64; self.dim()];
        for id in member_ids {
            if let Some(note) = self.notes.get(id) {
                for (slot, &x) in sum.iter_mut().zip(note.embedding.as_slice()) {
                    *slot += x as f64;
                }
            }
        }
        sum
    }

    /// Unit-normalize a component sum. Returns None when the members cancel
    /// out (no direction); callers keep the previous centroid in that case.
    fn renormalize(&self, sum: &[f64]) -> Option<EmbeddingVector> {
        let norm_sq: f64 = sum.iter().map(|&x| x * x).sum();
        if norm_sq <= f64::EPSILON {
            return None;
        }
        let inv = 1.0 / norm_sq.sqrt();
        EmbeddingVector::new(sum.iter().map(|&x| (x * inv) as f32).collect()).ok()
    }

    fn swap_member_embedding(
        &mut self,
        cluster_id: u64,
        old: &EmbeddingVector,
        new: &EmbeddingVector,
    ) -> Result<()> {
        let fallback = {
            let cluster = self
                .clusters
                .get_mut(&cluster_id)
                .ok_or(EngineError::ClusterNotFound(cluster_id))?;
            for ((slot, &o), &n) in cluster
                .sum
                .iter_mut()
                .zip(old.as_slice())
                .zip(new.as_slice())
            {
                *slot += n as f64 - o as f64;
            }
            cluster.centroid.clone()
        };
        if self.centroids_frozen {
            return Ok(());
        }
        let renormalized = {
            let cluster = &self.clusters[&cluster_id];
            self.renormalize(&cluster.sum)
        };
        self.clusters.get_mut(&cluster_id).unwrap().centroid = renormalized.unwrap_or(fallback);
        Ok(())
    }

    /// Verify membership, back-references, and link validity. Centroids are
    /// not checked, so this also holds for frozen-centroid stores.
    pub fn check_partition(&self) -> Result<()> {
        let mut assigned = BTreeSet::new();
        let mut membership_total = 0usize;
        for cluster in self.clusters.values() {
            if cluster.member_ids.is_empty() {
                return Err(EngineError::InvalidArgument(format!(
                    "cluster {} is empty",
                    cluster.cluster_id
                )));
            }
            for &id in &cluster.member_ids {
                membership_total += 1;
                if !assigned.insert(id) {
                    return Err(EngineError::InvalidArgument(format!(
                        "note {id} appears in more than one cluster"
                    )));
                }
                let note = self.notes.get(&id).ok_or(EngineError::NoteNotFound(id))?;
                if note.cluster_id != Some(cluster.cluster_id) {
                    return Err(EngineError::InvalidArgument(format!(
                        "note {id} back-reference disagrees with cluster {}",
                        cluster.cluster_id
                    )));
                }
            }
        }
        let assigned_notes = self
            .notes
            .values()
            .filter(|n| n.cluster_id.is_some())
            .count();
        if membership_total != assigned_notes {
            return Err(EngineError::InvalidArgument(format!(
                "membership total {membership_total} != assigned notes {assigned_notes}"
            )));
        }
        for note in self.notes.values() {
            if note.links.contains(&note.id) {
                return Err(EngineError::InvalidArgument(format!(
                    "note {} links to itself",
                    note.id
                )));
            }
            for target in &note.links {
                if !self.notes.contains_key(target) {
                    return Err(EngineError::InvalidArgument(format!(
                        "note {} links to missing note {target}",
                        note.id
                    )));
                }
            }
        }
        Ok(())
    }

    /// `check_partition` plus centroid consistency. Test support. Frozen
    /// stores skip the drift check; their centroids lag by design.
    pub fn check_invariants(&self) -> Result<()> {
        self.check_partition()?;
        if self.centroids_frozen {
            return Ok(());
        }
        for cluster in self.clusters.values() {
            let sum = self.member_sum(&cluster.member_ids);
            if let Some(recomputed) = self.renormalize(&sum) {
                let drift: f64 = cluster
                    .centroid
                    .as_slice()
                    .iter()
                    .zip(recomputed.as_slice())
                    .map(|(&a, &b)| ((a - b) as f64).powi(2))
                    .sum::<f64>()
                    .sqrt();
                if drift >= 1e-6 {
                    return Err(EngineError::InvalidArgument(format!(
                        "cluster {} centroid drifted by {drift:e}",
                        cluster.cluster_id
                    )));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::HashedNgramEmbedder;

    fn test_store() -> MemoryStore {
        MemoryStore::new(Arc::new(HashedNgramEmbedder::new(32)))
    }

    fn draft(store: &MemoryStore, content: &str) -> NoteDraft {
        NoteDraft {
            content: content.to_string(),
            timestamp: "2024-01-01T00:00:00Z".to_string(),
            keywords: vec![],
            tags: vec![],
            context: String::new(),
            embedding: store.embedder().embed(content).unwrap(),
        }
    }

    #[test]
    fn first_note_gets_id_zero_then_monotone() {
        let mut store = test_store();
        let d0 = draft(&store, "alpha");
        let d1 = draft(&store, "beta");
        assert_eq!(store.put_note(d0).unwrap(), 0);
        assert_eq!(store.put_note(d1).unwrap(), 1);
    }

    #[test]
    fn deleted_ids_are_never_reused() {
        let mut store = test_store();
        for i in 0..6 {
            let d = draft(&store, &format!("note {i}"));
            store.put_note(d).unwrap();
        }
        store.delete_note(5).unwrap();
        let d = draft(&store, "fresh");
        assert_eq!(store.put_note(d).unwrap(), 6);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let mut store = test_store();
        let bad = NoteDraft {
            embedding: EmbeddingVector::new(vec![1.0, 0.0]).unwrap(),
            ..draft(&store, "short vector")
        };
        assert!(matches!(
            store.put_note(bad),
            Err(EngineError::DimensionMismatch {
                expected: 32,
                got: 2
            })
        ));
    }

    #[test]
    fn patch_links_single_field() {
        let mut store = test_store();
        for i in 0..4 {
            let d = draft(&store, &format!("note {i}"));
            store.put_note(d).unwrap();
        }
        let patch = NotePatch {
            links: Some(BTreeSet::from([1])),
            ..NotePatch::default()
        };
        let updated = store.update_note(3, patch).unwrap();
        assert_eq!(updated.links, BTreeSet::from([1]));
        assert_eq!(updated.content, "note 3");
    }

    #[test]
    fn patch_content_changes_embedding() {
        let mut store = test_store();
        let d = draft(&store, "original text about cooking");
        let id = store.put_note(d).unwrap();
        let before = store.note(id).unwrap().embedding.clone();
        store
            .update_note(
                id,
                NotePatch {
                    content: Some("completely different topic entirely".into()),
                    ..NotePatch::default()
                },
            )
            .unwrap();
        let after = &store.note(id).unwrap().embedding;
        let cos = crate::embed::cosine_similarity(&before, after).unwrap();
        assert!(cos < 1.0 - 1e-6, "embedding should move, cosine = {cos}");
    }

    #[test]
    fn patch_missing_note_is_not_found() {
        let mut store = test_store();
        assert!(matches!(
            store.update_note(99, NotePatch::default()),
            Err(EngineError::NoteNotFound(99))
        ));
    }

    #[test]
    fn self_link_rejected() {
        let mut store = test_store();
        let d = draft(&store, "solo");
        let id = store.put_note(d).unwrap();
        let patch = NotePatch {
            links: Some(BTreeSet::from([id])),
            ..NotePatch::default()
        };
        assert!(store.update_note(id, patch).is_err());
    }

    #[test]
    fn cluster_membership_and_centroid_consistency() {
        let mut store = test_store();
        let mut ids = Vec::new();
        for i in 0..6 {
            let d = draft(&store, &format!("shared topic words {i}"));
            ids.push(store.put_note(d).unwrap());
        }
        let profile = ClusterProfile {
            summary: "shared topic".into(),
            tags: vec!["shared".into(), "topic".into(), "words".into()],
        };
        let c = store.create_cluster(ids[..3].to_vec(), profile).unwrap();
        store.assign_to_cluster(ids[3], c).unwrap();
        store.check_invariants().unwrap();
        assert_eq!(store.cluster(c).unwrap().len(), 4);
        assert_eq!(store.note(ids[3]).unwrap().cluster_id, Some(c));
        assert_eq!(store.unassigned_ids(), vec![ids[4], ids[5]]);
    }

    #[test]
    fn double_assignment_rejected() {
        let mut store = test_store();
        let d0 = draft(&store, "one");
        let d1 = draft(&store, "two");
        let a = store.put_note(d0).unwrap();
        let b = store.put_note(d1).unwrap();
        let profile = ClusterProfile {
            summary: "s".into(),
            tags: vec!["x".into(), "y".into(), "z".into()],
        };
        let c = store.create_cluster(vec![a], profile).unwrap();
        store.assign_to_cluster(b, c).unwrap();
        assert!(store.assign_to_cluster(b, c).is_err());
    }

    #[test]
    fn frozen_assignment_leaves_centroid_in_place() {
        let mut store = test_store();
        let a = store.put_note(draft(&store, "alpha words here")).unwrap();
        let b = store
            .put_note(draft(&store, "totally different themes"))
            .unwrap();
        let profile = ClusterProfile {
            summary: "s".into(),
            tags: vec!["x".into(), "y".into(), "z".into()],
        };
        let c = store.create_cluster(vec![a], profile).unwrap();
        let before = store.cluster(c).unwrap().centroid.clone();
        store.assign_frozen(b, c).unwrap();
        let cluster = store.cluster(c).unwrap();
        assert_eq!(cluster.centroid, before);
        assert_eq!(cluster.member_ids, vec![a, b]);
        assert_eq!(store.note(b).unwrap().cluster_id, Some(c));
        store.check_partition().unwrap();
        assert!(
            store.check_invariants().is_err(),
            "centroid is stale on purpose"
        );
        store.recompute_centroid(c).unwrap();
        store.check_invariants().unwrap();
    }

    #[test]
    fn retire_cluster_detaches_members_and_ids_advance() {
        let mut store = test_store();
        let mut ids = Vec::new();
        for i in 0..3 {
            let d = draft(&store, &format!("topic {i}"));
            ids.push(store.put_note(d).unwrap());
        }
        let profile = ClusterProfile {
            summary: "t".into(),
            tags: vec!["a".into(), "b".into(), "c".into()],
        };
        let parent = store.create_cluster(ids.clone(), profile.clone()).unwrap();
        let members = store.retire_cluster(parent).unwrap();
        assert_eq!(members, ids);
        assert!(store.cluster(parent).is_none());
        assert!(store.notes().all(|n| n.cluster_id.is_none()));
        let child = store.create_cluster(vec![ids[0]], profile).unwrap();
        assert!(child > parent, "cluster ids must never be reused");
    }

    #[test]
    fn access_log_records_reads_and_writes_with_section() {
        let mut store = test_store();
        let d = draft(&store, "logged");
        let id = store.put_note(d).unwrap();
        store.enable_access_log();
        store.set_access_section("evolution");
        store.note(id);
        store
            .update_note(
                id,
                NotePatch {
                    tags: Some(vec!["t".into()]),
                    ..NotePatch::default()
                },
            )
            .unwrap();
        let records = store.access_records();
        assert_eq!(records.len(), 2);
        assert_eq!(records[0].kind, AccessKind::Read);
        assert_eq!(records[1].kind, AccessKind::Write);
        assert!(records.iter().all(|r| r.section == "evolution"));
        assert!(records.iter().all(|r| r.note_id == id));
    }

    #[test]
    fn delete_strips_dangling_links() {
        let mut store = test_store();
        let d0 = draft(&store, "a");
        let d1 = draft(&store, "b");
        let a = store.put_note(d0).unwrap();
        let b = store.put_note(d1).unwrap();
        store
            .update_note(
                a,
                NotePatch {
                    links: Some(BTreeSet::from([b])),
                    ..NotePatch::default()
                },
            )
            .unwrap();
        store.delete_note(b).unwrap();
        assert!(store.note(a).unwrap().links.is_empty());
        store.check_invariants().unwrap();
    }
}
