//! Every model interaction: prompt construction, lenient response parsing,
//! documented fallbacks, and an auditable decision log.

mod backend;
pub mod parse;
pub mod prompts;

pub use backend::{ChatBackend, GatewayRole, RemoteChat, RemoteChatConfig, ScriptedStub, StubRule};

use std::collections::BTreeSet;
use std::sync::{Arc, Mutex};

use serde_json::Value;

use crate::error::{EngineError, Result};
use crate::store::ClusterProfile;
use crate::text::{first_sentence, fnv1a64_hex, tokens_by_frequency, truncate_chars};

/// Agent-generated note annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct Annotation {
    pub keywords: Vec<String>,
    pub tags: Vec<String>,
    pub context: String,
}

/// A candidate cluster as presented to the model, with the centroid
/// similarity that pre-selected it (used for the nearest-candidate fallback).
#[derive(Debug, Clone)]
pub struct RouteCandidate {
    pub cluster_id: u64,
    pub summary: String,
    pub tags: Vec<String>,
    pub snippets: Vec<String>,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterChoice {
    pub cluster_id: u64,
    pub fallback_used: bool,
    /// False when a single candidate made the model call unnecessary.
    pub model_called: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalSelection {
    /// Chosen cluster ids in the model's order; may be empty (a deliberate
    /// "nothing relevant" signal).
    pub selected: Vec<u64>,
    pub fallback_used: bool,
}

/// A neighbor note as shown to the evolver, and the shape of the new note.
#[derive(Debug, Clone)]
pub struct NeighborView {
    pub note_id: u64,
    pub content: String,
    pub context: String,
    pub tags: Vec<String>,
    pub keywords: Vec<String>,
}

/// One annotation-only revision of an existing neighbor.
#[derive(Debug, Clone, PartialEq)]
pub struct NoteRevision {
    pub note_id: u64,
    pub context: Option<String>,
    pub tags: Option<Vec<String>>,
    pub keywords: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvolutionDirective {
    pub links_for_new: BTreeSet<u64>,
    pub revisions: Vec<NoteRevision>,
    pub fallback_used: bool,
}

/// One completed model invocation.
#[derive(Debug, Clone)]
pub struct DecisionRecord {
    pub role: GatewayRole,
    pub prompt_hash: String,
    pub raw_response: String,
    pub parsed: String,
    pub fallback_used: bool,
}

/// Owns the backend plus the append-only decision log.
pub struct SlmGateway {
    backend: Arc<dyn ChatBackend>,
    log: Mutex<Vec<DecisionRecord>>,
}

impl SlmGateway {
    pub fn new(backend: Arc<dyn ChatBackend>) -> Self {
        SlmGateway {
            backend,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn decision_log(&self) -> Vec<DecisionRecord> {
        self.log.lock().unwrap().clone()
    }

    pub fn decision_count(&self) -> usize {
        self.log.lock().unwrap().len()
    }

    pub fn clear_decision_log(&self) {
        self.log.lock().unwrap().clear();
    }

    fn record(&self, role: GatewayRole, prompt: &str, raw: &str, parsed: String, fallback: bool) {
        self.log.lock().unwrap().push(DecisionRecord {
            role,
            prompt_hash: fnv1a64_hex(prompt),
            raw_response: raw.to_string(),
            parsed,
            fallback_used: fallback,
        });
    }

    /// Generate keywords, tags, and a one-sentence context for new content.
    /// Unusable model output falls back to a frequency-based annotation.
    pub fn annotate_note(&self, content: &str) -> Result<Annotation> {
        if content.trim().is_empty() {
            return Err(EngineError::InvalidArgument(
                "cannot annotate empty content".into(),
            ));
        }
        let prompt = prompts::annotation(content);
        let raw = self.backend.complete(GatewayRole::Annotate, &prompt)?;
        let parsed = parse_annotation(&raw);
        let (annotation, fallback) = match parsed {
            Some(a) => (a, false),
            None => (fallback_annotation(content), true),
        };
        self.record(
            GatewayRole::Annotate,
            &prompt,
            &raw,
            format!(
                "keywords={} tags={} context_len={}",
                annotation.keywords.len(),
                annotation.tags.len(),
                annotation.context.len()
            ),
            fallback,
        );
        Ok(annotation)
    }

    /// Pick the routed cluster among candidates. A lone candidate wins
    /// without a model call; an unusable response falls back to the
    /// highest-similarity candidate.
    pub fn select_cluster(
        &self,
        content: &str,
        context: &str,
        tags: &[String],
        candidates: &[RouteCandidate],
    ) -> Result<ClusterChoice> {
        if candidates.is_empty() {
            return Err(EngineError::InvalidArgument(
                "select_cluster needs at least one candidate".into(),
            ));
        }
        if candidates.len() == 1 {
            return Ok(ClusterChoice {
                cluster_id: candidates[0].cluster_id,
                fallback_used: false,
                model_called: false,
            });
        }
        let candidates_text: String = candidates
            .iter()
            .map(|c| prompts::candidate_block(c.cluster_id, &c.summary, &c.tags, &c.snippets))
            .collect();
        let prompt = prompts::cluster_selection(content, context, tags, &candidates_text);
        let raw = self.backend.complete(GatewayRole::SelectCluster, &prompt)?;
        let choice =
            extract_choice(&raw).filter(|id| candidates.iter().any(|c| c.cluster_id == *id));
        let (cluster_id, fallback) = match choice {
            Some(id) => (id, false),
            None => (nearest_candidate(candidates), true),
        };
        self.record(
            GatewayRole::SelectCluster,
            &prompt,
            &raw,
            format!("choice=cluster_{cluster_id}"),
            fallback,
        );
        Ok(ClusterChoice {
            cluster_id,
            fallback_used: fallback,
            model_called: true,
        })
    }

    /// Summarize a cluster from sample snippets. Tags are repaired to exactly
    /// three distinct single words; total parse failure falls back to a
    /// frequency-derived profile.
    pub fn generate_profile(&self, snippets: &[String]) -> Result<ClusterProfile> {
        if snippets.is_empty() {
            return Err(EngineError::InvalidArgument(
                "generate_profile needs at least one snippet".into(),
            ));
        }
        let samples_text: String = snippets.iter().map(|s| format!("- {s}\n")).collect();
        let source_text = snippets.join(" ");
        let prompt = prompts::profile_generation(&samples_text);
        let raw = self
            .backend
            .complete(GatewayRole::GenerateProfile, &prompt)?;

        let object = parse::parse_object_lenient(&raw);
        let summary = object
            .as_ref()
            .and_then(|v| v.get("summary"))
            .and_then(Value::as_str)
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .or_else(|| {
                parse::regex_string_value(&raw, "summary")
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
            });
        let raw_tags = object
            .as_ref()
            .and_then(|v| parse::string_array_field(v, "tags"))
            .or_else(|| parse::regex_string_array(&raw, "tags"));

        let fallback = summary.is_none() || raw_tags.is_none();
        let profile = ClusterProfile {
            summary: summary.unwrap_or_else(|| truncate_chars(&snippets[0], 120)),
            tags: repair_tags(raw_tags.unwrap_or_default(), &source_text),
        };
        self.record(
            GatewayRole::GenerateProfile,
            &prompt,
            &raw,
            format!(
                "summary_len={} tags={}",
                profile.summary.len(),
                profile.tags.join(",")
            ),
            fallback,
        );
        Ok(profile)
    }

    /// Stage-1 selection: a variable-size subset of candidate clusters,
    /// empty allowed. Parse failure falls back to all candidates.
    pub fn select_retrieval_clusters(
        &self,
        query: &str,
        query_tags: &[String],
        candidates: &[RouteCandidate],
        top_n: usize,
    ) -> Result<RetrievalSelection> {
        if candidates.is_empty() {
            return Ok(RetrievalSelection {
                selected: Vec::new(),
                fallback_used: false,
            });
        }
        let candidates_text: String = candidates
            .iter()
            .map(|c| prompts::candidate_block(c.cluster_id, &c.summary, &c.tags, &c.snippets))
            .collect();
        let prompt = prompts::retrieval_selection(query, query_tags, &candidates_text, top_n);
        let raw = self
            .backend
            .complete(GatewayRole::SelectRetrievalClusters, &prompt)?;

        let listed = parse::parse_object_lenient(&raw)
            .and_then(|v| parse::string_array_field(&v, "selected_clusters"))
            .or_else(|| parse::regex_string_array(&raw, "selected_clusters"));
        let (selected, fallback) = match listed {
            Some(items) => {
                let mut seen = BTreeSet::new();
                let ids = items
                    .iter()
                    .filter_map(|item| parse::parse_cluster_ref(item))
                    .filter(|id| candidates.iter().any(|c| c.cluster_id == *id))
                    .filter(|id| seen.insert(*id))
                    .collect();
                (ids, false)
            }
            None => (candidates.iter().map(|c| c.cluster_id).collect(), true),
        };
        self.record(
            GatewayRole::SelectRetrievalClusters,
            &prompt,
            &raw,
            format!("selected={selected:?}"),
            fallback,
        );
        Ok(RetrievalSelection {
            selected,
            fallback_used: fallback,
        })
    }

    /// One batched evolution call: linking decisions for the new note plus
    /// annotation-only revisions of neighbors. Parse failure is a no-op.
    /// The nested revision structure defeats key-level regex recovery, so the
    /// repair ladder stops at balanced-object extraction here.
    pub fn evolve_neighborhood(
        &self,
        new_note: &NeighborView,
        neighbors: &[NeighborView],
    ) -> Result<EvolutionDirective> {
        if neighbors.is_empty() {
            return Ok(EvolutionDirective::default());
        }
        let neighbor_ids: BTreeSet<u64> = neighbors.iter().map(|n| n.note_id).collect();
        let neighbors_block: String = neighbors.iter().map(render_note_block).collect();
        let prompt = prompts::evolution(&render_note_block(new_note), &neighbors_block);
        let raw = self.backend.complete(GatewayRole::Evolve, &prompt)?;

        let (directive, fallback) = match parse::parse_object_lenient(&raw) {
            Some(object) => (parse_evolution(&object, &neighbor_ids), false),
            None => (EvolutionDirective::default(), true),
        };
        self.record(
            GatewayRole::Evolve,
            &prompt,
            &raw,
            format!(
                "links={} revisions={}",
                directive.links_for_new.len(),
                directive.revisions.len()
            ),
            fallback,
        );
        Ok(EvolutionDirective {
            fallback_used: fallback,
            ..directive
        })
    }

    /// Answer a query from retrieved note contents. The trimmed completion
    /// text is the answer; transport errors surface to the caller.
    pub fn answer_query(&self, query: &str, notes: &[String]) -> Result<String> {
        let notes_block: String = if notes.is_empty() {
            "(no memories retrieved)\n".to_string()
        } else {
            notes
                .iter()
                .enumerate()
                .map(|(i, n)| format!("{}. {n}\n", i + 1))
                .collect()
        };
        let prompt = prompts::answering(query, &notes_block);
        let raw = self.backend.complete(GatewayRole::Answer, &prompt)?;
        let answer = raw.trim().to_string();
        self.record(
            GatewayRole::Answer,
            &prompt,
            &raw,
            truncate_chars(&answer, 60),
            false,
        );
        Ok(answer)
    }
}

fn render_note_block(view: &NeighborView) -> String {
    format!(
        "note_id: {}\ncontent: {}\ncontext: {}\ntags: {}\nkeywords: {}\n\n",
        view.note_id,
        view.content,
        view.context,
        view.tags.join(", "),
        view.keywords.join(", "),
    )
}

/// Trim, lowercase, drop empties, dedupe preserving order.
fn clean_terms(terms: Vec<String>) -> Vec<String> {
    let mut seen = BTreeSet::new();
    terms
        .into_iter()
        .map(|t| t.trim().to_lowercase())
        .filter(|t| !t.is_empty())
        .filter(|t| seen.insert(t.clone()))
        .collect()
}

fn parse_annotation(raw: &str) -> Option<Annotation> {
    let object = parse::parse_object_lenient(raw);
    let keywords = object
        .as_ref()
        .and_then(|v| parse::string_array_field(v, "keywords"))
        .or_else(|| parse::regex_string_array(raw, "keywords"))
        .map(clean_terms)?;
    let tags = object
        .as_ref()
        .and_then(|v| parse::string_array_field(v, "tags"))
        .or_else(|| parse::regex_string_array(raw, "tags"))
        .map(clean_terms)?;
    let context = object
        .as_ref()
        .and_then(|v| v.get("context"))
        .and_then(Value::as_str)
        .map(str::to_string)
        .or_else(|| parse::regex_string_value(raw, "context"))
        .map(|c| first_sentence(c.trim()))?;
    if keywords.is_empty() || tags.is_empty() || context.is_empty() {
        return None;
    }
    Some(Annotation {
        keywords,
        tags,
        context,
    })
}

fn fallback_annotation(content: &str) -> Annotation {
    Annotation {
        keywords: tokens_by_frequency(content, false)
            .into_iter()
            .take(5)
            .collect(),
        tags: Vec::new(),
        context: first_sentence(content),
    }
}

fn extract_choice(raw: &str) -> Option<u64> {
    parse::parse_object_lenient(raw)
        .and_then(|v| {
            v.get("choice").and_then(|c| match c {
                Value::String(s) => parse::parse_cluster_ref(s),
                Value::Number(n) => n.as_u64(),
                _ => None,
            })
        })
        .or_else(|| {
            parse::regex_string_value(raw, "choice").and_then(|s| parse::parse_cluster_ref(&s))
        })
}

/// Highest-similarity candidate; earlier entry wins ties.
fn nearest_candidate(candidates: &[RouteCandidate]) -> u64 {
    let mut best = &candidates[0];
    for candidate in &candidates[1..] {
        if candidate.similarity > best.similarity {
            best = candidate;
        }
    }
    best.cluster_id
}

/// Exactly three distinct single-word lowercase tags, padding shortfalls from
/// the source text's frequent non-stopword tokens.
fn repair_tags(raw_tags: Vec<String>, source_text: &str) -> Vec<String> {
    let mut tags: Vec<String> = Vec::new();
    let mut seen = BTreeSet::new();
    for tag in raw_tags {
        if let Some(word) = crate::text::tokenize(&tag).into_iter().next() {
            if seen.insert(word.clone()) {
                tags.push(word);
            }
        }
        if tags.len() == 3 {
            return tags;
        }
    }
    for word in tokens_by_frequency(source_text, true) {
        if tags.len() == 3 {
            break;
        }
        if seen.insert(word.clone()) {
            tags.push(word);
        }
    }
    let mut filler = 1;
    while tags.len() < 3 {
        let candidate = format!("topic{filler}");
        if seen.insert(candidate.clone()) {
            tags.push(candidate);
        }
        filler += 1;
    }
    tags
}

fn parse_evolution(object: &Value, neighbor_ids: &BTreeSet<u64>) -> EvolutionDirective {
    let links_for_new = object
        .get("links")
        .and_then(Value::as_array)
        .map(|items| {
            items
                .iter()
                .filter_map(|item| match item {
                    Value::Number(n) => n.as_u64(),
                    Value::String(s) => s.trim().parse::<u64>().ok(),
                    _ => None,
                })
                .filter(|id| neighbor_ids.contains(id))
                .collect()
        })
        .unwrap_or_default();
    let revisions = object
        .get("revisions")
        .and_then(Value::as_array)
        .map(|items| {
            items
                .iter()
                .filter_map(|item| {
                    let note_id = match item.get("note_id") {
                        Some(Value::Number(n)) => n.as_u64()?,
                        Some(Value::String(s)) => s.trim().parse::<u64>().ok()?,
                        _ => return None,
                    };
                    if !neighbor_ids.contains(&note_id) {
                        return None;
                    }
                    let revision = NoteRevision {
                        note_id,
                        context: item
                            .get("context")
                            .and_then(Value::as_str)
                            .map(str::to_string),
                        tags: parse::string_array_field(item, "tags").map(clean_terms),
                        keywords: parse::string_array_field(item, "keywords").map(clean_terms),
                    };
                    if revision.context.is_none()
                        && revision.tags.is_none()
                        && revision.keywords.is_none()
                    {
                        return None;
                    }
                    Some(revision)
                })
                .collect()
        })
        .unwrap_or_default();
    EvolutionDirective {
        links_for_new,
        revisions,
        fallback_used: false,
    }
}
