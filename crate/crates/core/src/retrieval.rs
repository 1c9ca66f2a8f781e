//! Two-stage retrieval: centroid shortlist, agentic cluster selection, then
//! exhaustive cosine ranking inside the chosen clusters. A flat scan serves
//! as the global-ablation mode and the pre-initialization fallback.

use serde::Serialize;

use crate::config::RetrievalMode;
use crate::embed::{cosine_similarity, EmbeddingVector};
use crate::engine::MemoryEngine;
use crate::error::Result;

/// How a query was actually served.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrievalModeUsed {
    TwoStage,
    Global,
    /// Two-stage was requested but no clusters exist yet; the whole store
    /// (the cold-start buffer included) is scanned flat.
    FlatFallback,
}

#[derive(Debug, Clone, Serialize)]
pub struct RankedNote {
    pub note_id: u64,
    /// Cosine between the query embedding and the note embedding.
    pub score: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RetrievalResult {
    pub query: String,
    pub mode: RetrievalModeUsed,
    /// Stage-1 shortlist, nearest centroid first. Empty for flat scans.
    pub candidate_cluster_ids: Vec<u64>,
    /// Clusters whose members were actually searched.
    pub selected_cluster_ids: Vec<u64>,
    pub ranked_notes: Vec<RankedNote>,
    /// Fraction of the store skipped: 1 - searched/total, 0 for flat scans.
    pub r_reduction: f64,
    pub searched_note_count: usize,
    pub total_note_count: usize,
    /// The model deliberately selected no cluster; the nearest candidate
    /// was searched instead.
    pub stage1_abstained: bool,
    /// Stage-1 output was unusable; every candidate was searched.
    pub stage1_fallback: bool,
}

impl MemoryEngine {
    /// Serve a query. `mode` usually comes from the config but may be
    /// overridden per call (ablations query one engine both ways).
    pub fn retrieve(&self, query: &str, mode: RetrievalMode) -> Result<RetrievalResult> {
        if self.store.note_count() == 0 {
            let mode_used = match mode {
                RetrievalMode::Global => RetrievalModeUsed::Global,
                RetrievalMode::TwoStage => RetrievalModeUsed::FlatFallback,
            };
            return Ok(RetrievalResult {
                query: query.to_string(),
                mode: mode_used,
                candidate_cluster_ids: Vec::new(),
                selected_cluster_ids: Vec::new(),
                ranked_notes: Vec::new(),
                r_reduction: 0.0,
                searched_note_count: 0,
                total_note_count: 0,
                stage1_abstained: false,
                stage1_fallback: false,
            });
        }
        let tags = self.query_annotation_tags(query)?;
        let embed_text = if tags.is_empty() {
            query.to_string()
        } else {
            format!("{query}\n{}", tags.join(" "))
        };
        let query_embedding = self.store.embedder().embed(&embed_text)?;
        match mode {
            RetrievalMode::Global => {
                self.rank_all(query, &query_embedding, RetrievalModeUsed::Global)
            }
            RetrievalMode::TwoStage if !self.initialized() => {
                self.rank_all(query, &query_embedding, RetrievalModeUsed::FlatFallback)
            }
            RetrievalMode::TwoStage => self.two_stage(query, &tags, &query_embedding),
        }
    }

    /// Retrieve and then answer from the retrieved contents.
    pub fn answer(&self, query: &str, mode: RetrievalMode) -> Result<(String, RetrievalResult)> {
        let retrieval = self.retrieve(query, mode)?;
        let contents: Vec<String> = retrieval
            .ranked_notes
            .iter()
            .filter_map(|r| self.store.note(r.note_id))
            .map(|n| n.content.clone())
            .collect();
        let answer = self.gateway.answer_query(query, &contents)?;
        Ok((answer, retrieval))
    }

    fn two_stage(
        &self,
        query: &str,
        tags: &[String],
        query_embedding: &EmbeddingVector,
    ) -> Result<RetrievalResult> {
        let ranked_clusters =
            self.nearest_clusters(query_embedding, self.config.stage1_candidates)?;
        let candidate_cluster_ids: Vec<u64> = ranked_clusters.iter().map(|r| r.0).collect();
        let candidates = self.route_candidates(&ranked_clusters);
        let selection = self.gateway.select_retrieval_clusters(
            query,
            tags,
            &candidates,
            self.config.stage1_candidates,
        )?;

        let mut stage1_abstained = false;
        let selected_cluster_ids = if selection.selected.is_empty() && !selection.fallback_used {
            // A deliberate empty pick still has to answer from something;
            // the nearest candidate is the least surprising scope.
            stage1_abstained = true;
            vec![candidate_cluster_ids[0]]
        } else {
            selection.selected.clone()
        };

        let mut member_ids: Vec<u64> = Vec::new();
        for &cluster_id in &selected_cluster_ids {
            member_ids.extend(&self.store.cluster_required(cluster_id)?.member_ids);
        }
        let searched_note_count = member_ids.len();
        let total_note_count = self.store.note_count();

        let mut scored: Vec<RankedNote> = Vec::with_capacity(member_ids.len());
        for id in member_ids {
            let note = self.store.note_required(id)?;
            scored.push(RankedNote {
                note_id: id,
                score: cosine_similarity(query_embedding, &note.embedding)?,
            });
        }
        let ranked_notes = top_k(scored, self.config.retrieve_top_k);

        Ok(RetrievalResult {
            query: query.to_string(),
            mode: RetrievalModeUsed::TwoStage,
            candidate_cluster_ids,
            selected_cluster_ids,
            ranked_notes,
            r_reduction: 1.0 - searched_note_count as f64 / total_note_count as f64,
            searched_note_count,
            total_note_count,
            stage1_abstained,
            stage1_fallback: selection.fallback_used,
        })
    }

    fn rank_all(
        &self,
        query: &str,
        query_embedding: &EmbeddingVector,
        mode: RetrievalModeUsed,
    ) -> Result<RetrievalResult> {
        let mut scored = Vec::with_capacity(self.store.note_count());
        for note in self.store.notes() {
            scored.push(RankedNote {
                note_id: note.id,
                score: cosine_similarity(query_embedding, &note.embedding)?,
            });
        }
        let total = scored.len();
        Ok(RetrievalResult {
            query: query.to_string(),
            mode,
            candidate_cluster_ids: Vec::new(),
            selected_cluster_ids: Vec::new(),
            ranked_notes: top_k(scored, self.config.retrieve_top_k),
            r_reduction: 0.0,
            searched_note_count: total,
            total_note_count: total,
            stage1_abstained: false,
            stage1_fallback: false,
        })
    }

    /// r = 1 - searched/total over the union of the selected clusters'
    /// members. Errors on an empty store, where the ratio is undefined.
    pub fn search_space_reduction(&self, selected: &[u64]) -> Result<f64> {
        let total = self.store.note_count();
        if total == 0 {
            return Err(crate::error::EngineError::InvalidArgument(
                "search-space reduction is undefined for an empty store".to_string(),
            ));
        }
        let mut searched: std::collections::BTreeSet<u64> = std::collections::BTreeSet::new();
        for &cluster_id in selected {
            searched.extend(&self.store.cluster_required(cluster_id)?.member_ids);
        }
        Ok(1.0 - searched.len() as f64 / total as f64)
    }

    /// Tags from annotating the query, memoized per query string. Concurrent
    /// misses may annotate twice; the scripted results are identical.
    fn query_annotation_tags(&self, query: &str) -> Result<Vec<String>> {
        if let Some(tags) = self.query_tags.lock().unwrap().get(query) {
            return Ok(tags.clone());
        }
        let annotation = self.gateway.annotate_note(query)?;
        self.query_tags
            .lock()
            .unwrap()
            .insert(query.to_string(), annotation.tags.clone());
        Ok(annotation.tags)
    }
}

/// Descending score, ties to the smaller note id, truncated to `k`.
fn top_k(mut scored: Vec<RankedNote>, k: usize) -> Vec<RankedNote> {
    scored.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.note_id.cmp(&b.note_id))
    });
    scored.truncate(k);
    scored
}
