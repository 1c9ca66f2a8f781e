//! Answer- and retrieval-quality metrics: token F1, BLEU-1, METEOR,
//! evidence precision/recall/F1, Recall@K, and nDCG@K.
//!
//! Answer metrics compare a predicted answer against a gold answer at the
//! token level. F1 normalizes the SQuAD way (articles removed); BLEU-1 and
//! METEOR score surface unigrams with articles kept. METEOR aligns exact
//! matches only, no synonym or stemming stage, since no synonym resource is
//! bundled. Retrieval metrics treat a retrieved note as relevant when its
//! normalized content contains a gold evidence string (or the reverse).

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use crate::error::{EngineError, Result};

/// Ranking cutoffs reported by the evaluation harness.
pub const EVAL_KS: [usize; 3] = [1, 5, 10];

const ARTICLES: [&str; 3] = ["a", "an", "the"];

/// A string together with its normalized token sequence.
#[derive(Debug, Clone)]
pub struct TokenizedText {
    pub original: String,
    pub tokens: Vec<String>,
}

impl TokenizedText {
    /// Surface tokenization: lowercase, ASCII punctuation dropped in place
    /// (so "don't" becomes "dont"), whitespace split.
    pub fn surface(text: &str) -> Self {
        TokenizedText {
            original: text.to_string(),
            tokens: surface_tokens(text),
        }
    }

    /// Surface tokenization minus English articles.
    pub fn answer(text: &str) -> Self {
        TokenizedText {
            original: text.to_string(),
            tokens: surface_tokens(text)
                .into_iter()
                .filter(|t| !ARTICLES.contains(&t.as_str()))
                .collect(),
        }
    }
}

fn surface_tokens(text: &str) -> Vec<String> {
    let cleaned: String = text
        .to_lowercase()
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect();
    cleaned.split_whitespace().map(str::to_string).collect()
}

/// Canonical form used for evidence matching: surface tokens re-joined
/// with single spaces.
pub fn normalize_surface(text: &str) -> String {
    surface_tokens(text).join(" ")
}

fn counts(tokens: &[String]) -> HashMap<&str, usize> {
    let mut map = HashMap::new();
    for t in tokens {
        *map.entry(t.as_str()).or_insert(0) += 1;
    }
    map
}

/// Size of the multiset intersection of two token bags.
fn bag_overlap(a: &[String], b: &[String]) -> usize {
    let b_counts = counts(b);
    counts(a)
        .into_iter()
        .map(|(tok, n)| n.min(b_counts.get(tok).copied().unwrap_or(0)))
        .sum()
}

/// Token-level F1 with SQuAD normalization. Both sides empty after
/// normalization scores 1.0; exactly one empty scores 0.0.
pub fn token_f1(prediction: &str, gold: &str) -> f64 {
    let pred = TokenizedText::answer(prediction).tokens;
    let gold = TokenizedText::answer(gold).tokens;
    if pred.is_empty() || gold.is_empty() {
        return if pred == gold { 1.0 } else { 0.0 };
    }
    let overlap = bag_overlap(&pred, &gold);
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / pred.len() as f64;
    let recall = overlap as f64 / gold.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Clipped unigram precision times the brevity penalty. The penalty is 1
/// when the candidate is longer than the reference, exp(1 - r/c) otherwise.
/// An empty candidate scores 0.0.
pub fn bleu1(prediction: &str, gold: &str) -> f64 {
    let pred = TokenizedText::surface(prediction).tokens;
    let gold = TokenizedText::surface(gold).tokens;
    let c = pred.len();
    let r_len = gold.len();
    if c == 0 {
        return 0.0;
    }
    let clipped = bag_overlap(&pred, &gold);
    let p1 = clipped as f64 / c as f64;
    let bp = if c > r_len {
        1.0
    } else {
        (1.0 - r_len as f64 / c as f64).exp()
    };
    bp * p1
}

/// Matched positions (prediction index, gold index), aligned greedily left
/// to right with a preference for continuing the current chunk.
fn greedy_alignment(pred: &[String], gold: &[String]) -> Vec<(usize, usize)> {
    let mut used = vec![false; gold.len()];
    let mut pairs = Vec::new();
    let mut prev_j: Option<usize> = None;
    for (i, tok) in pred.iter().enumerate() {
        let continuation = prev_j
            .map(|p| p + 1)
            .filter(|&j| j < gold.len() && !used[j] && gold[j] == *tok);
        let j = continuation
            .or_else(|| (0..gold.len()).find(|&cand| !used[cand] && gold[cand] == *tok));
        match j {
            Some(j) => {
                used[j] = true;
                pairs.push((i, j));
                prev_j = Some(j);
            }
            None => prev_j = None,
        }
    }
    pairs
}

/// Recall-weighted harmonic mean of unigram precision and recall, damped by
/// a fragmentation penalty of 0.5(ch/m)^3. Zero matches scores 0.0.
pub fn meteor(prediction: &str, gold: &str) -> f64 {
    let pred = TokenizedText::surface(prediction).tokens;
    let gold = TokenizedText::surface(gold).tokens;
    let pairs = greedy_alignment(&pred, &gold);
    let m = pairs.len();
    if m == 0 {
        return 0.0;
    }
    let mut chunks = 0usize;
    for (idx, &(i, j)) in pairs.iter().enumerate() {
        if idx == 0 || pairs[idx - 1] != (i.wrapping_sub(1), j.wrapping_sub(1)) {
            chunks += 1;
        }
    }
    let p = m as f64 / pred.len() as f64;
    let r = m as f64 / gold.len() as f64;
    let f_mean = 10.0 * p * r / (r + 9.0 * p);
    let penalty = 0.5 * (chunks as f64 / m as f64).powi(3);
    f_mean * (1.0 - penalty)
}

/// Whether a retrieved note covers a gold evidence string: one normalized
/// form is a substring of the other.
fn evidence_match(note: &str, gold_item: &str) -> bool {
    let note = normalize_surface(note);
    let gold = normalize_surface(gold_item);
    note.contains(&gold) || gold.contains(&note)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct EvidenceScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Evidence precision (matching retrieved notes over all retrieved), recall
/// (covered gold items over all gold), and their harmonic mean. The two
/// numerators differ on purpose: several notes may cover one gold item.
pub fn evidence_prf(retrieved: &[String], gold: &[String]) -> Result<EvidenceScores> {
    if gold.is_empty() {
        return Err(EngineError::InvalidArgument(
            "evidence metrics need at least one gold item".to_string(),
        ));
    }
    let matched_retrieved = retrieved
        .iter()
        .filter(|note| gold.iter().any(|g| evidence_match(note, g)))
        .count();
    let precision = if retrieved.is_empty() {
        0.0
    } else {
        matched_retrieved as f64 / retrieved.len() as f64
    };
    let covered = gold
        .iter()
        .filter(|g| retrieved.iter().any(|note| evidence_match(note, g)))
        .count();
    let recall = covered as f64 / gold.len() as f64;
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(EvidenceScores {
        precision,
        recall,
        f1,
    })
}

/// Fraction of gold items whose first matching note ranks within the top K.
pub fn recall_at_k(retrieved: &[String], gold: &[String], k: usize) -> Result<f64> {
    if gold.is_empty() {
        return Err(EngineError::InvalidArgument(
            "recall@k needs at least one gold item".to_string(),
        ));
    }
    let hits = gold
        .iter()
        .filter(|g| {
            retrieved
                .iter()
                .position(|note| evidence_match(note, g))
                .is_some_and(|idx| idx < k)
        })
        .count();
    Ok(hits as f64 / gold.len() as f64)
}

/// Binary-relevance nDCG with a log2(i+1) discount. The ideal ranking
/// permutes the retrieved list so its relevant items fill the top ranks.
/// No relevant item anywhere scores 0.0.
pub fn ndcg_at_k(retrieved: &[String], gold: &[String], k: usize) -> f64 {
    let rel: Vec<bool> = retrieved
        .iter()
        .map(|note| gold.iter().any(|g| evidence_match(note, g)))
        .collect();
    let total_relevant = rel.iter().filter(|&&r| r).count();
    if total_relevant == 0 {
        return 0.0;
    }
    let discount = |rank: usize| 1.0 / ((rank + 1) as f64).log2();
    let dcg: f64 = rel
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, &r)| r)
        .map(|(i, _)| discount(i + 1))
        .sum();
    let idcg: f64 = (1..=total_relevant.min(k)).map(discount).sum();
    dcg / idcg
}

/// Every metric for one evaluation case. Evidence and ranking entries stay
/// `None`/empty when the record carries no gold evidence.
#[derive(Debug, Clone, Serialize)]
pub struct MetricBundle {
    pub f1: f64,
    pub bleu1: f64,
    pub meteor: f64,
    pub e_prec: Option<f64>,
    pub e_recall: Option<f64>,
    pub e_f1: Option<f64>,
    pub recall_at_k: BTreeMap<usize, f64>,
    pub ndcg_at_k: BTreeMap<usize, f64>,
}

impl MetricBundle {
    /// Score one case. `gold_evidence` may be empty, which skips the
    /// retrieval metrics rather than zeroing them.
    pub fn compute(
        prediction: &str,
        gold_answer: &str,
        retrieved: &[String],
        gold_evidence: &[String],
    ) -> Result<MetricBundle> {
        let mut bundle = MetricBundle {
            f1: token_f1(prediction, gold_answer),
            bleu1: bleu1(prediction, gold_answer),
            meteor: meteor(prediction, gold_answer),
            e_prec: None,
            e_recall: None,
            e_f1: None,
            recall_at_k: BTreeMap::new(),
            ndcg_at_k: BTreeMap::new(),
        };
        if gold_evidence.is_empty() {
            return Ok(bundle);
        }
        let evidence = evidence_prf(retrieved, gold_evidence)?;
        bundle.e_prec = Some(evidence.precision);
        bundle.e_recall = Some(evidence.recall);
        bundle.e_f1 = Some(evidence.f1);
        for k in EVAL_KS {
            bundle
                .recall_at_k
                .insert(k, recall_at_k(retrieved, gold_evidence, k)?);
            bundle
                .ndcg_at_k
                .insert(k, ndcg_at_k(retrieved, gold_evidence, k));
        }
        Ok(bundle)
    }
}
