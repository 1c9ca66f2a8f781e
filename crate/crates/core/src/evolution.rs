//! Localized memory evolution: neighborhood selection inside the routed
//! cluster (or store-wide under the global ablation), batched link and
//! revision application, and cluster profile refresh.
//!
//! Every store access in this module goes through the logged per-note reads,
//! so tests can verify from the access log that local-scope evolution never
//! leaves the anchor's cluster.

use serde::Serialize;

use crate::config::EvolutionScope;
use crate::embed::cosine_similarity;
use crate::engine::MemoryEngine;
use crate::error::{EngineError, Result};
use crate::gateway::NeighborView;
use crate::store::NotePatch;

/// The notes considered alongside an anchor during one evolution step.
#[derive(Debug, Clone, Serialize)]
pub struct Neighborhood {
    pub anchor: u64,
    /// Descending cosine to the anchor; ties go to the smaller note id.
    pub neighbor_ids: Vec<u64>,
    pub scope: EvolutionScope,
}

/// What one evolution step changed.
#[derive(Debug, Clone, Serialize)]
pub struct EvolutionReport {
    pub links_added: usize,
    pub notes_revised: usize,
    pub profile_refreshed: bool,
    pub neighbor_ids: Vec<u64>,
    /// True when the model's directive was unusable and dropped.
    pub fallback_used: bool,
}

impl EvolutionReport {
    fn empty(neighbor_ids: Vec<u64>, fallback_used: bool) -> Self {
        EvolutionReport {
            links_added: 0,
            notes_revised: 0,
            profile_refreshed: false,
            neighbor_ids,
            fallback_used,
        }
    }
}

impl MemoryEngine {
    /// Rank the anchor's evolution candidates: cluster co-members for local
    /// scope, every other note for global scope.
    pub fn local_neighbors(
        &self,
        note_id: u64,
        k_local: usize,
        scope: EvolutionScope,
    ) -> Result<Neighborhood> {
        let (anchor_embedding, anchor_cluster) = {
            let anchor = self.store.note_required(note_id)?;
            (anchor.embedding.clone(), anchor.cluster_id)
        };
        let pool: Vec<u64> = match scope {
            EvolutionScope::Local => {
                let cluster_id = anchor_cluster.ok_or_else(|| {
                    EngineError::InvalidArgument(format!(
                        "note {note_id} is unassigned; local evolution needs a cluster"
                    ))
                })?;
                self.store.cluster_required(cluster_id)?.member_ids.clone()
            }
            EvolutionScope::Global => self.store.note_ids(),
        };
        let mut ranked: Vec<(u64, f64)> = Vec::with_capacity(pool.len().saturating_sub(1));
        for id in pool {
            if id == note_id {
                continue;
            }
            let note = self.store.note_required(id)?;
            ranked.push((id, cosine_similarity(&anchor_embedding, &note.embedding)?));
        }
        ranked.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.0.cmp(&b.0))
        });
        ranked.truncate(k_local);
        Ok(Neighborhood {
            anchor: note_id,
            neighbor_ids: ranked.into_iter().map(|r| r.0).collect(),
            scope,
        })
    }

    /// One batched evolution step for a routed note: link the anchor, apply
    /// annotation revisions to neighbors, then refresh the cluster profile.
    /// All note accesses are recorded in the store's access log under the
    /// "evolution" section for the duration of the call.
    pub fn run_evolution(&mut self, note_id: u64) -> Result<EvolutionReport> {
        self.store.enable_access_log();
        self.store.set_access_section("evolution");
        let result = self.evolve_inner(note_id);
        self.store.disable_access_log();
        result
    }

    fn evolve_inner(&mut self, note_id: u64) -> Result<EvolutionReport> {
        let scope = self.config.evolution_scope;
        let neighborhood = self.local_neighbors(note_id, self.config.local_neighbors, scope)?;
        if neighborhood.neighbor_ids.is_empty() {
            return Ok(EvolutionReport::empty(Vec::new(), false));
        }

        let anchor_view = self.neighbor_view(note_id)?;
        let neighbor_views: Vec<NeighborView> = neighborhood
            .neighbor_ids
            .iter()
            .map(|&id| self.neighbor_view(id))
            .collect::<Result<_>>()?;
        let directive = self
            .gateway
            .evolve_neighborhood(&anchor_view, &neighbor_views)?;
        if directive.fallback_used {
            return Ok(EvolutionReport::empty(neighborhood.neighbor_ids, true));
        }

        // Link the anchor to the chosen neighbors. Only the anchor's link
        // set changes; neighbors are reachable through the shared ids.
        let links_added = {
            let current = &self.store.note_required(note_id)?.links;
            let merged: std::collections::BTreeSet<u64> =
                current.union(&directive.links_for_new).copied().collect();
            let added = merged.len() - current.len();
            if added > 0 {
                self.store.update_note(
                    note_id,
                    NotePatch {
                        links: Some(merged),
                        ..NotePatch::default()
                    },
                )?;
            }
            added
        };

        // Annotation-only revisions; content and timestamp are immutable
        // here by construction of the patch.
        let mut notes_revised = 0;
        for revision in &directive.revisions {
            self.store.update_note(
                revision.note_id,
                NotePatch {
                    context: revision.context.clone(),
                    tags: revision.tags.clone(),
                    keywords: revision.keywords.clone(),
                    ..NotePatch::default()
                },
            )?;
            self.touch_note(revision.note_id);
            notes_revised += 1;
        }

        // The profile snapshot is rebuilt after the revisions land so it
        // always reflects the refined state, even on a quiet step.
        let owner = self.store.note_required(note_id)?.cluster_id;
        let profile_refreshed = match owner {
            Some(cluster_id) => {
                let members = self.store.cluster_required(cluster_id)?.member_ids.clone();
                let snippets = self.profile_snippets(&members);
                let profile = self.gateway.generate_profile(&snippets)?;
                self.store.set_profile(cluster_id, profile)?;
                true
            }
            None => false,
        };

        Ok(EvolutionReport {
            links_added,
            notes_revised,
            profile_refreshed,
            neighbor_ids: neighborhood.neighbor_ids,
            fallback_used: false,
        })
    }

    fn neighbor_view(&self, id: u64) -> Result<NeighborView> {
        let note = self.store.note_required(id)?;
        Ok(NeighborView {
            note_id: id,
            content: note.content.clone(),
            context: note.context.clone(),
            tags: note.tags.clone(),
            keywords: note.keywords.clone(),
        })
    }
}
