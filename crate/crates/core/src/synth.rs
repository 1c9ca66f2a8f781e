//! Seeded synthetic QA datasets with known topic labels.
//!
//! Notes are short bags of words drawn from pairwise-disjoint topic
//! vocabularies, interleaved round-robin so every prefix of the stream is
//! topically mixed. Disjoint vocabularies keep topics separable under the
//! hashed n-gram embedder, which a generation-time probe verifies. The
//! labels sidecar carries the ground-truth topic of every stream position
//! for purity scoring.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{QaDataset, QaRecord, StreamItem};
use crate::embed::{cosine_similarity, Embedder, HashedNgramEmbedder};
use crate::error::{EngineError, Result};

/// Words per generated note, before any distractor suffix.
const WORDS_PER_NOTE: usize = 8;
/// Embedding width used by the separability probe. Wide enough that hash
/// collisions cannot blur genuinely disjoint vocabularies at small samples.
const PROBE_DIM: usize = 256;
/// Required gap between mean intra-topic and inter-topic cosine.
const SEPARABILITY_MARGIN: f64 = 0.2;

const ASTRONOMY: [&str; 16] = [
    "galaxy",
    "nebula",
    "comet",
    "orbit",
    "telescope",
    "stellar",
    "quasar",
    "cosmos",
    "asteroid",
    "eclipse",
    "supernova",
    "pulsar",
    "meteor",
    "satellite",
    "lunar",
    "interstellar",
];
const COOKING: [&str; 16] = [
    "pasta",
    "sauce",
    "basil",
    "garlic",
    "simmer",
    "oven",
    "flour",
    "recipe",
    "crust",
    "stir",
    "saute",
    "marinade",
    "broth",
    "seasoning",
    "knead",
    "caramelize",
];
const TENNIS: [&str; 16] = [
    "racket", "serve", "volley", "baseline", "backhand", "forehand", "deuce", "tiebreak",
    "topspin", "slice", "rally", "smash", "dropshot", "grip", "umpire", "court",
];
const GARDENING: [&str; 16] = [
    "soil",
    "mulch",
    "pruning",
    "seedling",
    "compost",
    "trellis",
    "perennial",
    "germinate",
    "weeding",
    "fertilizer",
    "greenhouse",
    "bloom",
    "rootstock",
    "irrigation",
    "harvest",
    "transplant",
];
const DISTRACTORS: [&str; 16] = [
    "ledger",
    "umbrella",
    "hallway",
    "pencil",
    "cardboard",
    "vendor",
    "traffic",
    "envelope",
    "sidewalk",
    "thursday",
    "gravel",
    "warehouse",
    "receipt",
    "corridor",
    "plastic",
    "anyway",
];

/// The four built-in topic vocabularies, in the order `generate` uses them.
pub fn builtin_vocabularies() -> Vec<Vec<String>> {
    [&ASTRONOMY, &COOKING, &TENNIS, &GARDENING]
        .iter()
        .map(|pool| pool.iter().map(|w| w.to_string()).collect())
        .collect()
}

#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub topic_count: usize,
    pub notes_per_topic: usize,
    /// One word pool per topic. Empty means "use the built-in pools",
    /// which support up to four topics (drift topic included).
    pub vocabularies: Vec<Vec<String>>,
    /// Probability that a note gets one off-topic distractor word appended.
    pub distractor_rate: f64,
    /// When set, one extra topic enters the stream at this position; no
    /// note of that topic appears earlier.
    pub drift_topic_at: Option<usize>,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            topic_count: 3,
            notes_per_topic: 30,
            vocabularies: Vec::new(),
            distractor_rate: 0.1,
            drift_topic_at: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticOutput {
    pub dataset: QaDataset,
    /// Ground-truth topic of each stream position.
    pub labels: Vec<usize>,
}

fn validate(spec: &SyntheticSpec, pools: &[Vec<String>]) -> Result<()> {
    if spec.topic_count == 0 {
        return Err(EngineError::InvalidArgument(
            "topic_count must be at least 1".to_string(),
        ));
    }
    if spec.notes_per_topic == 0 {
        return Err(EngineError::InvalidArgument(
            "notes_per_topic must be at least 1".to_string(),
        ));
    }
    if !(0.0..=1.0).contains(&spec.distractor_rate) {
        return Err(EngineError::InvalidArgument(
            "distractor_rate must lie in [0, 1]".to_string(),
        ));
    }
    let needed = spec.topic_count + usize::from(spec.drift_topic_at.is_some());
    if pools.len() < needed {
        return Err(EngineError::InvalidArgument(format!(
            "{needed} topics requested but only {} vocabularies available",
            pools.len()
        )));
    }
    for pool in pools.iter().take(needed) {
        if pool.is_empty() {
            return Err(EngineError::InvalidArgument(
                "vocabularies must be nonempty".to_string(),
            ));
        }
    }
    for a in 0..needed {
        for b in a + 1..needed {
            if let Some(word) = pools[a].iter().find(|w| pools[b].contains(w)) {
                return Err(EngineError::InvalidArgument(format!(
                    "vocabularies {a} and {b} overlap on {word:?}"
                )));
            }
        }
        if spec.distractor_rate > 0.0 {
            if let Some(word) = pools[a].iter().find(|w| DISTRACTORS.contains(&w.as_str())) {
                return Err(EngineError::InvalidArgument(format!(
                    "vocabulary {a} overlaps the distractor pool on {word:?}"
                )));
            }
        }
    }
    Ok(())
}

fn make_note(pool: &[String], rng: &mut ChaCha8Rng, distractor_rate: f64) -> String {
    // Distinct words per note: same-topic notes then overlap on several
    // word types with high probability, keeping intra-topic cosine high
    // even for very small streams.
    let take = WORDS_PER_NOTE.min(pool.len());
    let mut words: Vec<&str> = rand::seq::index::sample(rng, pool.len(), take)
        .into_iter()
        .map(|i| pool[i].as_str())
        .collect();
    if rng.gen_bool(distractor_rate) {
        words.push(DISTRACTORS[rng.gen_range(0..DISTRACTORS.len())]);
    }
    words.join(" ")
}

/// Mean intra-topic cosine must beat mean inter-topic cosine by the margin.
fn check_separability(contents: &[String], labels: &[usize]) -> Result<()> {
    let embedder = HashedNgramEmbedder::new(PROBE_DIM);
    let embeddings: Result<Vec<_>> = contents.iter().map(|c| embedder.embed(c)).collect();
    let embeddings = embeddings?;
    let mut intra = (0.0f64, 0usize);
    let mut inter = (0.0f64, 0usize);
    for i in 0..embeddings.len() {
        for j in i + 1..embeddings.len() {
            let sim = cosine_similarity(&embeddings[i], &embeddings[j])?;
            if labels[i] == labels[j] {
                intra = (intra.0 + sim, intra.1 + 1);
            } else {
                inter = (inter.0 + sim, inter.1 + 1);
            }
        }
    }
    if intra.1 == 0 || inter.1 == 0 {
        return Ok(());
    }
    let gap = intra.0 / intra.1 as f64 - inter.0 / inter.1 as f64;
    if gap < SEPARABILITY_MARGIN {
        return Err(EngineError::InvalidArgument(format!(
            "topics are not separable: intra/inter cosine gap {gap:.3} < {SEPARABILITY_MARGIN}"
        )));
    }
    Ok(())
}

/// Generate a dataset plus ground-truth labels. Deterministic: the same
/// `SyntheticSpec` always yields byte-identical output.
pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticOutput> {
    let pools = if spec.vocabularies.is_empty() {
        builtin_vocabularies()
    } else {
        spec.vocabularies.clone()
    };
    validate(spec, &pools)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    // Base topics interleave round-robin: 0, 1, 2, 0, 1, 2, ...
    let mut stream: Vec<(String, usize)> = Vec::new();
    for _ in 0..spec.notes_per_topic {
        for topic in 0..spec.topic_count {
            stream.push((
                make_note(&pools[topic], &mut rng, spec.distractor_rate),
                topic,
            ));
        }
    }

    if let Some(position) = spec.drift_topic_at {
        let drift_topic = spec.topic_count;
        let drift_notes: Vec<(String, usize)> = (0..spec.notes_per_topic)
            .map(|_| {
                (
                    make_note(&pools[drift_topic], &mut rng, spec.distractor_rate),
                    drift_topic,
                )
            })
            .collect();
        let position = position.min(stream.len());
        // Alternate drift notes with the remaining base notes from the
        // drift position onward.
        let tail: Vec<(String, usize)> = stream.split_off(position);
        let mut tail_iter = tail.into_iter();
        let mut drift_iter = drift_notes.into_iter();
        loop {
            match (tail_iter.next(), drift_iter.next()) {
                (None, None) => break,
                (base, drift) => {
                    stream.extend(base);
                    stream.extend(drift);
                }
            }
        }
    }

    let contents: Vec<String> = stream.iter().map(|(c, _)| c.clone()).collect();
    let labels: Vec<usize> = stream.iter().map(|(_, t)| *t).collect();
    let topic_total = spec.topic_count + usize::from(spec.drift_topic_at.is_some());
    if topic_total >= 2 {
        check_separability(&contents, &labels)?;
    }

    let items: Vec<StreamItem> = contents
        .iter()
        .enumerate()
        .map(|(i, content)| StreamItem {
            content: content.clone(),
            timestamp: i.to_string(),
        })
        .collect();

    // One QA record per topic. The gold evidence is the topic's first note
    // in stream order; the question reuses the pool's leading words so its
    // embedding lands near the topic's cluster.
    let mut records = Vec::new();
    for topic in 0..topic_total {
        let first = labels
            .iter()
            .position(|&l| l == topic)
            .expect("every topic emits at least one note");
        let pool = &pools[topic];
        let lead: Vec<&str> = pool.iter().take(3).map(String::as_str).collect();
        records.push(QaRecord {
            question: format!("which memory mentions {}?", lead.join(" ")),
            gold_answer: contents[first].clone(),
            gold_evidence: vec![contents[first].clone()],
            memory_stream: items.clone(),
        });
    }

    Ok(SyntheticOutput {
        dataset: QaDataset { records },
        labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_spec_counts_add_up() {
        let spec = SyntheticSpec {
            notes_per_topic: 10,
            ..SyntheticSpec::default()
        };
        let out = generate(&spec).unwrap();
        assert_eq!(out.labels.len(), 30);
        for topic in 0..3 {
            assert_eq!(out.labels.iter().filter(|&&l| l == topic).count(), 10);
        }
        assert_eq!(out.dataset.records.len(), 3);
        let stream = &out.dataset.records[0].memory_stream;
        assert_eq!(stream.len(), 30);
        // Round-robin interleave: positions 0,1,2 carry topics 0,1,2.
        assert_eq!(&out.labels[..6], &[0, 1, 2, 0, 1, 2]);
        // All records share the one stream.
        assert_eq!(out.dataset.distinct_streams().len(), 1);
    }

    #[test]
    fn same_spec_twice_is_byte_identical() {
        let spec = SyntheticSpec {
            notes_per_topic: 5,
            drift_topic_at: Some(7),
            ..SyntheticSpec::default()
        };
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(
            serde_json::to_string(&a.dataset).unwrap(),
            serde_json::to_string(&b.dataset).unwrap()
        );
        assert_eq!(a.labels, b.labels);

        let other = generate(&SyntheticSpec { seed: 1, ..spec }).unwrap();
        assert_ne!(
            serde_json::to_string(&a.dataset).unwrap(),
            serde_json::to_string(&other.dataset).unwrap()
        );
    }

    #[test]
    fn drift_topic_never_appears_before_its_position() {
        let spec = SyntheticSpec {
            notes_per_topic: 10,
            drift_topic_at: Some(20),
            ..SyntheticSpec::default()
        };
        let out = generate(&spec).unwrap();
        assert_eq!(out.labels.len(), 40);
        let first_drift = out.labels.iter().position(|&l| l == 3).unwrap();
        assert!(first_drift >= 20);
        assert_eq!(out.labels.iter().filter(|&&l| l == 3).count(), 10);
        // The drift topic gets a QA record too.
        assert_eq!(out.dataset.records.len(), 4);
    }

    #[test]
    fn overlapping_vocabularies_are_rejected() {
        let spec = SyntheticSpec {
            topic_count: 2,
            vocabularies: vec![
                vec!["shared".to_string(), "alpha".to_string()],
                vec!["beta".to_string(), "shared".to_string()],
            ],
            ..SyntheticSpec::default()
        };
        let err = generate(&spec).unwrap_err();
        assert!(err.to_string().contains("overlap"));
    }

    #[test]
    fn separability_probe_rejects_near_identical_topics() {
        // The pools are disjoint as raw strings but identical after the
        // embedder lowercases, which erases the cosine gap between topics.
        let lower: Vec<String> = (1..=8).map(|i| format!("common{i}")).collect();
        let upper: Vec<String> = (1..=8).map(|i| format!("Common{i}")).collect();
        let spec = SyntheticSpec {
            topic_count: 2,
            notes_per_topic: 4,
            distractor_rate: 0.0,
            vocabularies: vec![lower, upper],
            ..SyntheticSpec::default()
        };
        let err = generate(&spec).unwrap_err();
        assert!(err.to_string().contains("separable"), "{err}");
    }

    #[test]
    fn gold_evidence_is_a_generated_note() {
        let out = generate(&SyntheticSpec {
            notes_per_topic: 3,
            ..SyntheticSpec::default()
        })
        .unwrap();
        for record in &out.dataset.records {
            let evidence = &record.gold_evidence[0];
            assert!(record
                .memory_stream
                .iter()
                .any(|item| item.content == *evidence));
        }
    }

    #[test]
    fn distractor_rate_one_appends_a_distractor_to_every_note() {
        let out = generate(&SyntheticSpec {
            topic_count: 2,
            notes_per_topic: 4,
            distractor_rate: 1.0,
            ..SyntheticSpec::default()
        })
        .unwrap();
        for item in &out.dataset.records[0].memory_stream {
            let last = item.content.split_whitespace().last().unwrap();
            assert!(DISTRACTORS.contains(&last), "{last} not a distractor");
        }
    }
}
