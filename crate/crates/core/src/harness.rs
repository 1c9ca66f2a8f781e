//! Batch evaluation: ingest a dataset's memory streams, answer every
//! question, score it, and aggregate into a reproducible report.
//!
//! Ingestion is strictly sequential because routing decisions depend on the
//! evolving cluster state. Evaluation fans queries out across a thread pool;
//! retrieval is read-only and the scripted backend is thread-safe, and cases
//! are collected in input order so reports serialize byte-identically.

use std::collections::HashSet;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{EngineConfig, RetrievalMode};
use crate::dataset::QaDataset;
use crate::engine::{EngineStats, IngestOutcome, MemoryEngine};
use crate::error::Result;
use crate::metrics::MetricBundle;
use crate::retrieval::RetrievalResult;

/// Outcome of ingesting a dataset's distinct streams.
#[derive(Debug, Clone, Serialize)]
pub struct IngestSummary {
    pub items_ingested: usize,
    pub distinct_streams: usize,
    pub duplicate_streams: usize,
    pub splits_triggered: usize,
    /// Per-item outcomes in ingestion order, for audit output.
    pub outcomes: Vec<IngestOutcome>,
}

/// Ingest every distinct memory stream in first-appearance order.
pub fn ingest_dataset(engine: &mut MemoryEngine, dataset: &QaDataset) -> Result<IngestSummary> {
    let streams = dataset.distinct_streams();
    let distinct = streams.len();
    let mut outcomes = Vec::new();
    let mut splits = 0usize;
    for stream in streams {
        for item in stream {
            let outcome = engine.ingest(&item.content, &item.timestamp)?;
            splits += usize::from(!outcome.splits.is_empty());
            outcomes.push(outcome);
        }
    }
    Ok(IngestSummary {
        items_ingested: outcomes.len(),
        distinct_streams: distinct,
        duplicate_streams: dataset.records.len().saturating_sub(distinct),
        splits_triggered: splits,
        outcomes,
    })
}

/// One evaluated question.
#[derive(Debug, Clone, Serialize)]
pub struct EvalCase {
    pub index: usize,
    pub question: String,
    pub gold_answer: String,
    /// None when the query failed; the error is in `failed`.
    pub prediction: Option<String>,
    pub metrics: Option<MetricBundle>,
    pub retrieval: Option<RetrievalResult>,
    pub failed: Option<String>,
}

/// Arithmetic means over the cases where each metric is defined.
#[derive(Debug, Clone, Serialize)]
pub struct MetricMeans {
    pub f1: Option<f64>,
    pub bleu1: Option<f64>,
    pub meteor: Option<f64>,
    pub e_prec: Option<f64>,
    pub e_recall: Option<f64>,
    pub e_f1: Option<f64>,
    pub recall_at_k: std::collections::BTreeMap<usize, f64>,
    pub ndcg_at_k: std::collections::BTreeMap<usize, f64>,
}

/// Search-space reduction statistics over successful queries.
#[derive(Debug, Clone, Serialize)]
pub struct RStats {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub config: EngineConfig,
    pub seed: u64,
    pub mode: RetrievalMode,
    pub case_count: usize,
    pub failed_count: usize,
    pub aggregates: MetricMeans,
    pub r_stats: Option<RStats>,
    pub cluster_stats: EngineStats,
    pub cases: Vec<EvalCase>,
    /// Stdout-only; excluded from serialization to keep reports
    /// byte-reproducible.
    #[serde(skip)]
    pub wall_clock: Duration,
}

fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

fn aggregate(cases: &[EvalCase]) -> MetricMeans {
    let bundles: Vec<&MetricBundle> = cases.iter().filter_map(|c| c.metrics.as_ref()).collect();
    let collect = |f: &dyn Fn(&MetricBundle) -> Option<f64>| -> Vec<f64> {
        bundles.iter().filter_map(|b| f(b)).collect()
    };
    let mut recall_at_k = std::collections::BTreeMap::new();
    let mut ndcg_at_k = std::collections::BTreeMap::new();
    for k in crate::metrics::EVAL_KS {
        let r: Vec<f64> = bundles
            .iter()
            .filter_map(|b| b.recall_at_k.get(&k).copied())
            .collect();
        if let Some(m) = mean(&r) {
            recall_at_k.insert(k, m);
        }
        let n: Vec<f64> = bundles
            .iter()
            .filter_map(|b| b.ndcg_at_k.get(&k).copied())
            .collect();
        if let Some(m) = mean(&n) {
            ndcg_at_k.insert(k, m);
        }
    }
    MetricMeans {
        f1: mean(&collect(&|b| Some(b.f1))),
        bleu1: mean(&collect(&|b| Some(b.bleu1))),
        meteor: mean(&collect(&|b| Some(b.meteor))),
        e_prec: mean(&collect(&|b| b.e_prec)),
        e_recall: mean(&collect(&|b| b.e_recall)),
        e_f1: mean(&collect(&|b| b.e_f1)),
        recall_at_k,
        ndcg_at_k,
    }
}

fn r_stats(cases: &[EvalCase]) -> Option<RStats> {
    let values: Vec<f64> = cases
        .iter()
        .filter_map(|c| c.retrieval.as_ref())
        .map(|r| r.r_reduction)
        .collect();
    if values.is_empty() {
        return None;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64;
    Some(RStats {
        mean,
        std: variance.sqrt(),
        min: values.iter().cloned().fold(f64::INFINITY, f64::min),
        max: values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    })
}

fn evaluate_case(
    engine: &MemoryEngine,
    index: usize,
    record: &crate::dataset::QaRecord,
    mode: RetrievalMode,
) -> EvalCase {
    let mut case = EvalCase {
        index,
        question: record.question.clone(),
        gold_answer: record.gold_answer.clone(),
        prediction: None,
        metrics: None,
        retrieval: None,
        failed: None,
    };
    let (answer, retrieval) = match engine.answer(&record.question, mode) {
        Ok(pair) => pair,
        Err(e) => {
            case.failed = Some(e.to_string());
            return case;
        }
    };
    let retrieved_contents: Vec<String> = retrieval
        .ranked_notes
        .iter()
        .filter_map(|r| engine.store().note(r.note_id))
        .map(|n| n.content.clone())
        .collect();
    match MetricBundle::compute(
        &answer,
        &record.gold_answer,
        &retrieved_contents,
        &record.gold_evidence,
    ) {
        Ok(bundle) => case.metrics = Some(bundle),
        Err(e) => case.failed = Some(e.to_string()),
    }
    case.prediction = Some(answer);
    case.retrieval = Some(retrieval);
    case
}

/// Answer and score every record against an already-ingested engine.
pub fn evaluate(engine: &MemoryEngine, dataset: &QaDataset, mode: RetrievalMode) -> EvalReport {
    let started = Instant::now();
    let cases: Vec<EvalCase> = dataset
        .records
        .par_iter()
        .enumerate()
        .map(|(index, record)| evaluate_case(engine, index, record, mode))
        .collect();
    let failed_count = cases.iter().filter(|c| c.failed.is_some()).count();
    EvalReport {
        config: engine.config().clone(),
        seed: engine.config().rng_seed,
        mode,
        case_count: cases.len(),
        failed_count,
        aggregates: aggregate(&cases),
        r_stats: r_stats(&cases),
        cluster_stats: engine.stats(),
        cases,
        wall_clock: started.elapsed(),
    }
}

/// Ingest then evaluate: the full pipeline for one dataset.
pub fn run_pipeline(
    engine: &mut MemoryEngine,
    dataset: &QaDataset,
    mode: RetrievalMode,
) -> Result<(IngestSummary, EvalReport)> {
    let summary = ingest_dataset(engine, dataset)?;
    let report = evaluate(engine, dataset, mode);
    Ok((summary, report))
}

/// Fraction of notes whose cluster's majority label matches their own,
/// given ground-truth labels indexed by note id. Notes with ids outside the
/// label table or without a cluster are ignored.
pub fn cluster_purity(engine: &MemoryEngine, labels: &[usize]) -> f64 {
    let mut majority_hits = 0usize;
    let mut total = 0usize;
    for cluster in engine.store().clusters() {
        let cluster_labels: Vec<usize> = cluster
            .member_ids
            .iter()
            .filter_map(|&id| labels.get(id as usize).copied())
            .collect();
        if cluster_labels.is_empty() {
            continue;
        }
        let distinct: HashSet<usize> = cluster_labels.iter().copied().collect();
        let majority = distinct
            .into_iter()
            .map(|label| cluster_labels.iter().filter(|&&l| l == label).count())
            .max()
            .unwrap_or(0);
        majority_hits += majority;
        total += cluster_labels.len();
    }
    if total == 0 {
        0.0
    } else {
        majority_hits as f64 / total as f64
    }
}
