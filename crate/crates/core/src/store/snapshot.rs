//! Snapshot persistence: the whole engine state as one JSON document.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::atomic::AtomicBool;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::config::EngineConfig;
use crate::embed::{Embedder, EmbeddingVector};
use crate::error::{EngineError, Result};

use super::{AccessLogState, Cluster, ClusterProfile, MemoryNote, MemoryStore};

pub const SNAPSHOT_VERSION: u32 = 1;

/// Stored centroids are validated against a fresh recompute on load; anything
/// past this Euclidean distance is treated as corruption.
const CENTROID_LOAD_TOLERANCE: f64 = 1e-3;

#[derive(Serialize, Deserialize)]
struct ClusterWire {
    cluster_id: u64,
    member_ids: Vec<u64>,
    centroid: EmbeddingVector,
    profile: ClusterProfile,
    created_at: u64,
}

#[derive(Serialize, Deserialize)]
struct Counters {
    next_note_id: u64,
    next_cluster_id: u64,
    processed: u64,
}

#[derive(Serialize, Deserialize)]
struct SnapshotDoc {
    version: u32,
    config: EngineConfig,
    notes: Vec<MemoryNote>,
    clusters: Vec<ClusterWire>,
    counters: Counters,
}

/// Serialize the store and its config to `path`.
pub fn write_snapshot(store: &MemoryStore, config: &EngineConfig, path: &Path) -> Result<()> {
    let doc = SnapshotDoc {
        version: SNAPSHOT_VERSION,
        config: config.clone(),
        notes: store.notes.values().cloned().collect(),
        clusters: store
            .clusters
            .values()
            .map(|c| ClusterWire {
                cluster_id: c.cluster_id,
                member_ids: c.member_ids.clone(),
                centroid: c.centroid.clone(),
                profile: c.profile.clone(),
                created_at: c.created_at,
            })
            .collect(),
        counters: Counters {
            next_note_id: store.next_note_id,
            next_cluster_id: store.next_cluster_id,
            processed: store.processed,
        },
    };
    let file = std::fs::File::create(path)?;
    let mut writer = std::io::BufWriter::new(file);
    serde_json::to_writer_pretty(&mut writer, &doc)
        .map_err(|e| EngineError::SnapshotFormat(format!("serialize: {e}")))?;
    writer.write_all(b"\n")?;
    writer.flush()?;
    Ok(())
}

/// Load a snapshot into a fresh store. The input file is fully validated
/// before anything is returned, so a failed load leaves no partial state.
/// Cluster running sums and centroids are recomputed from member embeddings;
/// the stored centroid is used only as a corruption check.
pub fn read_snapshot(
    path: &Path,
    embedder: Arc<dyn Embedder>,
) -> Result<(MemoryStore, EngineConfig)> {
    let bytes = std::fs::read(path)?;
    let doc: SnapshotDoc = serde_json::from_slice(&bytes)
        .map_err(|e| EngineError::SnapshotFormat(format!("parse: {e}")))?;
    if doc.version != SNAPSHOT_VERSION {
        return Err(EngineError::SnapshotFormat(format!(
            "unsupported snapshot version {} (expected {SNAPSHOT_VERSION})",
            doc.version
        )));
    }
    doc.config.validate()?;
    if embedder.dim() != doc.config.embedding_dim {
        return Err(EngineError::DimensionMismatch {
            expected: doc.config.embedding_dim,
            got: embedder.dim(),
        });
    }

    let mut notes = BTreeMap::new();
    for note in doc.notes {
        if note.embedding.dim() != embedder.dim() {
            return Err(EngineError::SnapshotFormat(format!(
                "note {} embedding dimension {} != {}",
                note.id,
                note.embedding.dim(),
                embedder.dim()
            )));
        }
        if note.id >= doc.counters.next_note_id {
            return Err(EngineError::SnapshotFormat(format!(
                "note id {} not below next_note_id {}",
                note.id, doc.counters.next_note_id
            )));
        }
        if notes.insert(note.id, note).is_some() {
            return Err(EngineError::SnapshotFormat("duplicate note id".into()));
        }
    }
    for note in notes.values() {
        for target in &note.links {
            if *target == note.id || !notes.contains_key(target) {
                return Err(EngineError::SnapshotFormat(format!(
                    "note {} has invalid link {target}",
                    note.id
                )));
            }
        }
    }

    let mut store = MemoryStore {
        embedder,
        notes,
        clusters: BTreeMap::new(),
        next_note_id: doc.counters.next_note_id,
        next_cluster_id: doc.counters.next_cluster_id,
        processed: doc.counters.processed,
        centroids_frozen: doc.config.routing_strategy
            == crate::config::RoutingStrategy::KmeansFixed,
        log_enabled: AtomicBool::new(false),
        access_log: Mutex::new(AccessLogState::default()),
    };

    for wire in doc.clusters {
        if wire.cluster_id >= doc.counters.next_cluster_id {
            return Err(EngineError::SnapshotFormat(format!(
                "cluster id {} not below next_cluster_id {}",
                wire.cluster_id, doc.counters.next_cluster_id
            )));
        }
        if wire.member_ids.is_empty() {
            return Err(EngineError::SnapshotFormat(format!(
                "cluster {} has no members",
                wire.cluster_id
            )));
        }
        for member in &wire.member_ids {
            match store.notes.get(member) {
                None => {
                    return Err(EngineError::SnapshotFormat(format!(
                        "cluster {} references missing note {member}",
                        wire.cluster_id
                    )))
                }
                Some(note) if note.cluster_id != Some(wire.cluster_id) => {
                    return Err(EngineError::SnapshotFormat(format!(
                        "note {member} back-reference disagrees with cluster {}",
                        wire.cluster_id
                    )))
                }
                _ => {}
            }
        }
        let sum = store.member_sum(&wire.member_ids);
        // Under the frozen-centroid strategy the stored centroid legitimately
        // lags the member sum, so it is kept verbatim and not cross-checked.
        let frozen = store.centroids_frozen;
        let centroid = match store.renormalize(&sum) {
            Some(c) if !frozen => {
                let drift: f64 = c
                    .as_slice()
                    .iter()
                    .zip(wire.centroid.as_slice())
                    .map(|(&a, &b)| ((a - b) as f64).powi(2))
                    .sum::<f64>()
                    .sqrt();
                if drift > CENTROID_LOAD_TOLERANCE {
                    return Err(EngineError::SnapshotFormat(format!(
                        "cluster {} centroid disagrees with members by {drift:e}",
                        wire.cluster_id
                    )));
                }
                c
            }
            _ => wire.centroid.clone(),
        };
        store.clusters.insert(
            wire.cluster_id,
            Cluster {
                cluster_id: wire.cluster_id,
                member_ids: wire.member_ids,
                centroid,
                profile: wire.profile,
                created_at: wire.created_at,
                sum,
            },
        );
    }

    for note in store.notes.values() {
        if let Some(cluster_id) = note.cluster_id {
            let listed = store
                .clusters
                .get(&cluster_id)
                .map(|c| c.member_ids.contains(&note.id))
                .unwrap_or(false);
            if !listed {
                return Err(EngineError::SnapshotFormat(format!(
                    "note {} claims cluster {cluster_id} which does not list it",
                    note.id
                )));
            }
        }
    }

    Ok((store, doc.config))
}

/// Write notes as JSON Lines, one object per line, in id order.
pub fn export_notes_jsonl(store: &MemoryStore, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut writer = std::io::BufWriter::new(file);
    for note in store.notes.values() {
        let line = serde_json::to_string(note)
            .map_err(|e| EngineError::SnapshotFormat(format!("serialize note: {e}")))?;
        writer.write_all(line.as_bytes())?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

/// Read a notes JSONL file produced by `export_notes_jsonl`.
pub fn read_notes_jsonl(path: &Path) -> Result<Vec<MemoryNote>> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut notes = Vec::new();
    for (index, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let note: MemoryNote = serde_json::from_str(&line)
            .map_err(|e| EngineError::SnapshotFormat(format!("line {}: {e}", index + 1)))?;
        notes.push(note);
    }
    Ok(notes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::HashedNgramEmbedder;
    use crate::store::NoteDraft;

    fn test_embedder() -> Arc<dyn Embedder> {
        Arc::new(HashedNgramEmbedder::new(128))
    }

    fn populated_store() -> (MemoryStore, EngineConfig) {
        let embedder = test_embedder();
        let mut store = MemoryStore::new(Arc::clone(&embedder));
        let topics = [
            "cooking pasta dinner",
            "basketball game score",
            "rust compiler borrow",
        ];
        let mut ids: Vec<Vec<u64>> = vec![Vec::new(); 3];
        for round in 0..4 {
            for (t, topic) in topics.iter().enumerate() {
                let content = format!("{topic} item {round}");
                let embedding = embedder
                    .embed(&MemoryNote::embed_text(&content, ""))
                    .unwrap();
                let id = store
                    .put_note(NoteDraft {
                        content,
                        timestamp: format!("2024-01-0{}T00:00:0{round}Z", t + 1),
                        keywords: vec![topic.split(' ').next().unwrap().into()],
                        tags: vec![],
                        context: String::new(),
                        embedding,
                    })
                    .unwrap();
                ids[t].push(id);
                store.bump_processed();
            }
        }
        for (t, members) in ids.iter().enumerate() {
            store
                .create_cluster(
                    members.clone(),
                    ClusterProfile {
                        summary: format!("topic {t}"),
                        tags: vec![format!("t{t}a"), format!("t{t}b"), format!("t{t}c")],
                    },
                )
                .unwrap();
        }
        (store, EngineConfig::default())
    }

    #[test]
    fn empty_store_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.json");
        let store = MemoryStore::new(test_embedder());
        write_snapshot(&store, &EngineConfig::default(), &path).unwrap();
        let (loaded, config) = read_snapshot(&path, test_embedder()).unwrap();
        assert_eq!(loaded.note_count(), 0);
        assert_eq!(loaded.cluster_count(), 0);
        assert_eq!(loaded.next_note_id(), 0);
        assert_eq!(config, EngineConfig::default());
    }

    #[test]
    fn populated_round_trip_preserves_observable_state() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("full.json");
        let (store, config) = populated_store();
        write_snapshot(&store, &config, &path).unwrap();
        let (loaded, loaded_config) = read_snapshot(&path, test_embedder()).unwrap();
        assert_eq!(loaded_config, config);
        assert_eq!(loaded.processed(), store.processed());
        assert_eq!(loaded.next_note_id(), store.next_note_id());
        assert_eq!(loaded.next_cluster_id(), store.next_cluster_id());
        let original: Vec<_> = store.notes().cloned().collect();
        let restored: Vec<_> = loaded.notes().cloned().collect();
        assert_eq!(original, restored);
        for cluster in store.clusters() {
            let restored = loaded.cluster(cluster.cluster_id).unwrap();
            assert_eq!(restored.member_ids, cluster.member_ids);
            assert_eq!(restored.profile, cluster.profile);
            assert_eq!(restored.created_at, cluster.created_at);
            let drift: f64 = restored
                .centroid
                .as_slice()
                .iter()
                .zip(cluster.centroid.as_slice())
                .map(|(&a, &b)| ((a - b) as f64).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(drift < 1e-6, "centroid drift {drift}");
        }
        loaded.check_invariants().unwrap();
    }

    #[test]
    fn truncated_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trunc.json");
        let (store, config) = populated_store();
        write_snapshot(&store, &config, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(
            read_snapshot(&path, test_embedder()),
            Err(EngineError::SnapshotFormat(_))
        ));
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vers.json");
        let (store, config) = populated_store();
        write_snapshot(&store, &config, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap().replacen(
            "\"version\": 1",
            "\"version\": 99",
            1,
        );
        std::fs::write(&path, text).unwrap();
        match read_snapshot(&path, test_embedder()) {
            Err(EngineError::SnapshotFormat(message)) => {
                assert!(message.contains("version"))
            }
            other => panic!("expected version error, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn corrupt_centroid_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cent.json");
        let (store, config) = populated_store();
        write_snapshot(&store, &config, &path).unwrap();
        let mut doc: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        // Point the first cluster's centroid somewhere unrelated.
        let centroid = doc["clusters"][0]["centroid"].as_array().unwrap().len();
        let mut fake = vec![0.0; centroid];
        fake[0] = 1.0;
        doc["clusters"][0]["centroid"] = serde_json::json!(fake);
        std::fs::write(&path, serde_json::to_string(&doc).unwrap()).unwrap();
        assert!(read_snapshot(&path, test_embedder()).is_err());
    }

    #[test]
    fn frozen_strategy_snapshot_keeps_stale_centroid() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("frozen.json");
        let embedder = test_embedder();
        let mut store = MemoryStore::new(Arc::clone(&embedder));
        let mut ids = Vec::new();
        for content in ["pasta topic note", "galaxy cluster physics"] {
            let id = store
                .put_note(NoteDraft {
                    content: content.into(),
                    timestamp: "2024-01-01T00:00:00Z".into(),
                    keywords: vec![],
                    tags: vec![],
                    context: String::new(),
                    embedding: embedder.embed(content).unwrap(),
                })
                .unwrap();
            ids.push(id);
        }
        let profile = ClusterProfile {
            summary: "s".into(),
            tags: vec!["a".into(), "b".into(), "c".into()],
        };
        let c = store.create_cluster(vec![ids[0]], profile).unwrap();
        store.assign_frozen(ids[1], c).unwrap();
        let frozen_centroid = store.cluster(c).unwrap().centroid.clone();

        let config = EngineConfig {
            routing_strategy: crate::config::RoutingStrategy::KmeansFixed,
            ..EngineConfig::default()
        };
        write_snapshot(&store, &config, &path).unwrap();
        let (loaded, _) = read_snapshot(&path, test_embedder()).unwrap();
        assert_eq!(loaded.cluster(c).unwrap().centroid, frozen_centroid);
    }

    #[test]
    fn notes_jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("notes.jsonl");
        let (store, _) = populated_store();
        export_notes_jsonl(&store, &path).unwrap();
        let notes = read_notes_jsonl(&path).unwrap();
        assert_eq!(notes.len(), store.note_count());
        assert_eq!(notes[0].id, 0);
        let text = std::fs::read_to_string(&path).unwrap();
        let first_line = text.lines().next().unwrap();
        let value: serde_json::Value = serde_json::from_str(first_line).unwrap();
        for key in [
            "id",
            "content",
            "cluster_id",
            "timestamp",
            "keywords",
            "tags",
            "context",
            "links",
            "embedding",
        ] {
            assert!(value.get(key).is_some(), "missing key {key}");
        }
    }
}
