//! Property tests for the invariants the rest of the system leans on:
//! metric ranges and symmetries, embedding determinism and normalization,
//! clustering postconditions, and store consistency under random streams.

use std::sync::Arc;

use proptest::collection::vec;
use proptest::prelude::*;

use memgrove::clustering::kmeans;
use memgrove::config::EngineConfig;
use memgrove::embed::{cosine_similarity, Embedder, EmbeddingVector, HashedNgramEmbedder};
use memgrove::gateway::{ChatBackend, ScriptedStub, StubRule};
use memgrove::metrics::{
    bleu1, evidence_prf, meteor, ndcg_at_k, normalize_surface, recall_at_k, token_f1,
};
use memgrove::MemoryEngine;

const EPS: f64 = 1e-9;

fn text() -> impl Strategy<Value = String> {
    proptest::string::string_regex("[a-zA-Z0-9 ,.!?'\\-]{0,60}").unwrap()
}

fn phrase() -> impl Strategy<Value = String> {
    proptest::string::string_regex("[a-z]{1,8}( [a-z]{1,8}){0,5}").unwrap()
}

fn unit_range(value: f64) -> bool {
    (-EPS..=1.0 + EPS).contains(&value)
}

proptest! {
    #[test]
    fn text_metrics_stay_in_the_unit_interval(a in text(), b in text()) {
        prop_assert!(unit_range(token_f1(&a, &b)));
        prop_assert!(unit_range(bleu1(&a, &b)));
        prop_assert!(unit_range(meteor(&a, &b)));
    }

    #[test]
    fn token_f1_is_symmetric(a in text(), b in text()) {
        prop_assert!((token_f1(&a, &b) - token_f1(&b, &a)).abs() < EPS);
    }

    #[test]
    fn token_f1_against_itself_is_perfect(a in text()) {
        prop_assert!((token_f1(&a, &a) - 1.0).abs() < EPS);
    }

    #[test]
    fn normalization_is_idempotent(a in text()) {
        let once = normalize_surface(&a);
        prop_assert_eq!(normalize_surface(&once), once.clone());
    }

    #[test]
    fn recall_is_monotone_in_k_and_evidence_stays_bounded(
        retrieved in vec(phrase(), 0..8),
        gold in vec(phrase(), 1..4),
    ) {
        let mut last = 0.0f64;
        for k in 1..=10usize {
            let r = recall_at_k(&retrieved, &gold, k).unwrap();
            prop_assert!(unit_range(r));
            prop_assert!(r + EPS >= last, "recall dropped from {last} to {r} at k={k}");
            last = r;

            prop_assert!(unit_range(ndcg_at_k(&retrieved, &gold, k)));
        }
        let scores = evidence_prf(&retrieved, &gold).unwrap();
        prop_assert!(unit_range(scores.precision));
        prop_assert!(unit_range(scores.recall));
        prop_assert!(unit_range(scores.f1));
    }

    #[test]
    fn hashed_embeddings_are_unit_length_and_deterministic(
        a in phrase(),
        dim in 8usize..192,
    ) {
        let embedder = HashedNgramEmbedder::new(dim);
        let first = embedder.embed(&a).unwrap();
        let second = embedder.embed(&a).unwrap();
        prop_assert_eq!(first.as_slice(), second.as_slice());
        let norm: f64 = first
            .as_slice()
            .iter()
            .map(|&x| (x as f64) * (x as f64))
            .sum();
        prop_assert!((norm.sqrt() - 1.0).abs() < 1e-5, "norm was {}", norm.sqrt());

        let sim = cosine_similarity(&first, &second).unwrap();
        prop_assert!((sim - 1.0).abs() < 1e-6);
    }

    #[test]
    fn cosine_is_symmetric_and_bounded(a in phrase(), b in phrase()) {
        let embedder = HashedNgramEmbedder::new(64);
        let va = embedder.embed(&a).unwrap();
        let vb = embedder.embed(&b).unwrap();
        let ab = cosine_similarity(&va, &vb).unwrap();
        let ba = cosine_similarity(&vb, &va).unwrap();
        prop_assert!((ab - ba).abs() < EPS);
        prop_assert!((-1.0 - 1e-6..=1.0 + 1e-6).contains(&ab));
    }

    #[test]
    fn kmeans_partitions_every_point_deterministically(
        raw in vec(vec(-1.0f32..1.0, 8), 2..14),
        k in 1usize..4,
        seed in 0u64..64,
    ) {
        let points: Vec<EmbeddingVector> = raw
            .into_iter()
            .filter_map(|row| EmbeddingVector::new(row).ok())
            .collect();
        prop_assume!(points.len() >= k);
        let refs: Vec<&EmbeddingVector> = points.iter().collect();

        let result = kmeans(&refs, k, seed).unwrap();
        prop_assert_eq!(result.assignments.len(), refs.len());
        prop_assert_eq!(result.centroids.len(), k);
        prop_assert!(result.assignments.iter().all(|&a| a < k));
        prop_assert!(result.inertia >= -EPS);
        prop_assert!(result.inertia <= 4.0 * refs.len() as f64 + EPS);

        let again = kmeans(&refs, k, seed).unwrap();
        prop_assert_eq!(result.assignments, again.assignments);
        prop_assert!((result.inertia - again.inertia).abs() < EPS);
    }
}

fn stub() -> Arc<dyn ChatBackend> {
    let rule = |role: &str, response: &str| -> StubRule {
        serde_json::from_value(serde_json::json!({
            "role": role,
            "match": "",
            "response": response,
        }))
        .unwrap()
    };
    Arc::new(ScriptedStub::new(vec![
        rule("annotate", ""),
        rule("select_cluster", "{\"choice\": \"cluster_999999\"}"),
        rule("generate_profile", ""),
        rule("evolve", ""),
    ]))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    /// Random short streams keep the store consistent: every note accounted
    /// for, membership symmetric, and no cluster left over the threshold.
    #[test]
    fn random_streams_preserve_store_invariants(
        contents in vec(phrase(), 1..28),
        threshold in 4usize..9,
    ) {
        let config = EngineConfig {
            init_buffer_size: 6,
            init_clusters: 2,
            split_threshold: threshold,
            embedding_dim: 64,
            ..EngineConfig::desk_default()
        };
        let mut engine =
            MemoryEngine::new(config, Arc::new(HashedNgramEmbedder::new(64)), stub()).unwrap();
        for (i, content) in contents.iter().enumerate() {
            engine.ingest(content, &i.to_string()).unwrap();
        }
        engine.store().check_invariants().unwrap();
        if engine.initialized() {
            let oversized = engine
                .store()
                .clusters()
                .filter(|c| c.member_ids.len() > threshold)
                .count();
            prop_assert_eq!(oversized, 0);
        } else {
            prop_assert_eq!(engine.store().cluster_count(), 0);
        }
    }
}
