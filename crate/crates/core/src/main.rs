//! Command-line front end: ingest datasets into a memory store, query it,
//! run batch evaluations and ablations, inspect snapshots, import public
//! benchmark files, and generate synthetic datasets.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use memgrove::config::{EngineConfig, EvolutionScope, RetrievalMode, RoutingStrategy};
use memgrove::dataset::{import_hotpotqa, import_locomo, QaDataset};
use memgrove::embed::{Embedder, HashedNgramEmbedder, RemoteEmbedder, RemoteEmbedderConfig};
use memgrove::engine::MemoryEngine;
use memgrove::error::{EngineError, Result};
use memgrove::gateway::{ChatBackend, RemoteChat, RemoteChatConfig, ScriptedStub};
use memgrove::harness::{evaluate, ingest_dataset, EvalReport, IngestSummary};
use memgrove::store::snapshot::export_notes_jsonl;
use memgrove::synth::{generate, SyntheticSpec};

#[derive(Parser)]
#[command(
    name = "memgrove",
    version,
    about = "Self-organizing memory engine with model-routed clustering and two-stage retrieval"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: CommonOpts,
}

#[derive(Args)]
struct CommonOpts {
    /// TOML config file mirroring the engine's field names. Missing fields
    /// fall back to the full-scale defaults.
    #[arg(long, global = true, conflicts_with = "full_defaults")]
    config: Option<PathBuf>,

    /// Use the full-scale defaults instead of the desk-scale ones.
    #[arg(long, global = true)]
    full_defaults: bool,

    /// RNG seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Retrieval mode override.
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,

    /// Routing strategy override.
    #[arg(long, global = true, value_enum)]
    strategy: Option<StrategyArg>,

    /// Evolution scope override.
    #[arg(long, global = true, value_enum)]
    evolution_scope: Option<ScopeArg>,

    /// Retrieval top-k override.
    #[arg(long, global = true)]
    k: Option<usize>,

    /// Path to a scripted decision table (JSON array of rules); replaces a
    /// live model backend for hermetic runs.
    #[arg(long, global = true)]
    stub: Option<PathBuf>,

    /// Chat-completions endpoint for the live model backend. Also read from
    /// SLM_ENDPOINT; the bearer token comes from SLM_API_KEY.
    #[arg(long, global = true)]
    slm_endpoint: Option<String>,

    /// Embedding-service endpoint. Also read from EMBEDDINGS_ENDPOINT; the
    /// bearer token comes from EMBEDDINGS_API_KEY. Without one, a
    /// deterministic hashed n-gram embedder is used.
    #[arg(long, global = true)]
    embeddings_endpoint: Option<String>,

    /// Emit machine-readable JSON instead of tables.
    #[arg(long, global = true)]
    json: bool,

    /// Abort on the first malformed dataset record instead of skipping it.
    #[arg(long, global = true)]
    strict: bool,

    /// Write per-item ingestion outcomes (routing, splits, evolution) as
    /// JSONL to this path.
    #[arg(long, global = true)]
    audit: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    #[value(name = "two_stage")]
    TwoStage,
    Global,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Agentic,
    #[value(name = "cosine_greedy")]
    CosineGreedy,
    #[value(name = "kmeans_fixed")]
    KmeansFixed,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScopeArg {
    Local,
    Global,
}

#[derive(Clone, Copy, ValueEnum)]
enum ImportFormat {
    Hotpotqa,
    Locomo,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest a JSONL dataset's memory streams and write a snapshot.
    Ingest {
        /// Dataset file (JSONL records with a memory_stream field).
        #[arg(long)]
        data: PathBuf,
        /// Snapshot output path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Answer one question against a snapshot.
    Query {
        question: String,
        #[arg(long)]
        snapshot: PathBuf,
    },
    /// Ingest (or load a snapshot) and score every dataset record.
    Evaluate {
        #[arg(long)]
        data: PathBuf,
        /// Evaluate against this snapshot instead of ingesting the dataset.
        #[arg(long)]
        snapshot: Option<PathBuf>,
        /// Write the full report as JSON to this path.
        #[arg(long)]
        report: Option<PathBuf>,
        /// One of: evolution=global, retrieval=global,
        /// strategy=cosine_greedy, strategy=kmeans_fixed.
        #[arg(long)]
        ablate: Option<String>,
    },
    /// Print cluster statistics for a snapshot.
    Stats {
        #[arg(long)]
        snapshot: PathBuf,
    },
    /// Validate a snapshot and optionally export its notes as JSONL.
    Snapshot {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        export_notes: Option<PathBuf>,
    },
    /// Convert a public benchmark file to the unified JSONL schema.
    Import {
        #[arg(long, value_enum)]
        format: ImportFormat,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a seeded synthetic dataset with ground-truth topic labels.
    Synth {
        #[arg(long, default_value_t = 3)]
        topics: usize,
        #[arg(long, default_value_t = 30)]
        notes_per_topic: usize,
        #[arg(long, default_value_t = 0.1)]
        distractor_rate: f64,
        /// Introduce one extra topic at this stream position.
        #[arg(long)]
        drift_at: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Labels sidecar path (JSON array, topic per stream position).
        #[arg(long)]
        labels: Option<PathBuf>,
    },
}

/// Print a line to stdout, exiting quietly if the consumer closed the pipe.
fn emit(text: impl AsRef<str>) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    if out
        .write_all(text.as_ref().as_bytes())
        .and_then(|()| out.write_all(b"\n"))
        .is_err()
    {
        std::process::exit(0);
    }
}

macro_rules! emitln {
    ($($arg:tt)*) => { emit(format!($($arg)*)) };
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest { ref data, ref out } => cmd_ingest(&cli.common, data, out),
        Command::Query {
            ref question,
            ref snapshot,
        } => cmd_query(&cli.common, question, snapshot),
        Command::Evaluate {
            ref data,
            ref snapshot,
            ref report,
            ref ablate,
        } => cmd_evaluate(
            &cli.common,
            data,
            snapshot.as_deref(),
            report.as_deref(),
            ablate.as_deref(),
        ),
        Command::Stats { ref snapshot } => cmd_stats(&cli.common, snapshot),
        Command::Snapshot {
            ref input,
            ref export_notes,
        } => cmd_snapshot(input, export_notes.as_deref()),
        Command::Import {
            format,
            ref input,
            ref out,
        } => cmd_import(&cli.common, format, input, out),
        Command::Synth {
            topics,
            notes_per_topic,
            distractor_rate,
            drift_at,
            ref out,
            ref labels,
        } => cmd_synth(
            &cli.common,
            topics,
            notes_per_topic,
            distractor_rate,
            drift_at,
            out,
            labels.as_deref(),
        ),
    }
}

/// Base defaults, then the config file if given, then flag overrides.
fn resolve_config(common: &CommonOpts) -> Result<EngineConfig> {
    let mut config = match &common.config {
        Some(path) => EngineConfig::from_toml_str(&fs::read_to_string(path)?)?,
        None if common.full_defaults => EngineConfig::default(),
        None => EngineConfig::desk_default(),
    };
    if let Some(seed) = common.seed {
        config.rng_seed = seed;
    }
    if let Some(mode) = common.mode {
        config.retrieval_mode = retrieval_mode(mode);
    }
    if let Some(strategy) = common.strategy {
        config.routing_strategy = match strategy {
            StrategyArg::Agentic => RoutingStrategy::Agentic,
            StrategyArg::CosineGreedy => RoutingStrategy::CosineGreedy,
            StrategyArg::KmeansFixed => RoutingStrategy::KmeansFixed,
        };
    }
    if let Some(scope) = common.evolution_scope {
        config.evolution_scope = match scope {
            ScopeArg::Local => EvolutionScope::Local,
            ScopeArg::Global => EvolutionScope::Global,
        };
    }
    if let Some(k) = common.k {
        config.retrieve_top_k = k;
    }
    config.validate()?;
    Ok(config)
}

fn retrieval_mode(mode: ModeArg) -> RetrievalMode {
    match mode {
        ModeArg::TwoStage => RetrievalMode::TwoStage,
        ModeArg::Global => RetrievalMode::Global,
    }
}

fn apply_ablation(config: &mut EngineConfig, ablate: &str) -> Result<()> {
    match ablate {
        "evolution=global" => config.evolution_scope = EvolutionScope::Global,
        "retrieval=global" => config.retrieval_mode = RetrievalMode::Global,
        "strategy=cosine_greedy" => config.routing_strategy = RoutingStrategy::CosineGreedy,
        "strategy=kmeans_fixed" => config.routing_strategy = RoutingStrategy::KmeansFixed,
        other => {
            return Err(EngineError::InvalidArgument(format!(
                "unknown ablation {other:?}; expected evolution=global, retrieval=global, \
                 strategy=cosine_greedy, or strategy=kmeans_fixed"
            )))
        }
    }
    Ok(())
}

fn build_backend(common: &CommonOpts) -> Result<Arc<dyn ChatBackend>> {
    if let Some(stub) = &common.stub {
        return Ok(Arc::new(ScriptedStub::from_path(stub)?));
    }
    let endpoint = common
        .slm_endpoint
        .clone()
        .or_else(|| std::env::var("SLM_ENDPOINT").ok());
    if let Some(endpoint) = endpoint {
        return Ok(Arc::new(RemoteChat::new(RemoteChatConfig {
            endpoint,
            ..RemoteChatConfig::default()
        })));
    }
    Err(EngineError::InvalidArgument(
        "a model backend is required: pass --stub <table.json> or --slm-endpoint <url> \
         (or set SLM_ENDPOINT)"
            .to_string(),
    ))
}

fn build_embedder(common: &CommonOpts, dim: usize) -> Arc<dyn Embedder> {
    let endpoint = common
        .embeddings_endpoint
        .clone()
        .or_else(|| std::env::var("EMBEDDINGS_ENDPOINT").ok());
    match endpoint {
        Some(endpoint) => Arc::new(RemoteEmbedder::new(RemoteEmbedderConfig {
            endpoint,
            dim,
            ..RemoteEmbedderConfig::default()
        })),
        None => Arc::new(HashedNgramEmbedder::new(dim)),
    }
}

/// The embedder must match the snapshot's dimension, which is only known
/// after peeking at the file.
fn snapshot_dim(path: &Path) -> Result<usize> {
    let text = fs::read_to_string(path)?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| EngineError::SnapshotFormat(e.to_string()))?;
    value["config"]["embedding_dim"]
        .as_u64()
        .map(|d| d as usize)
        .ok_or_else(|| EngineError::SnapshotFormat("missing config.embedding_dim".to_string()))
}

fn load_engine(common: &CommonOpts, snapshot: &Path) -> Result<MemoryEngine> {
    let dim = snapshot_dim(snapshot)?;
    let embedder = build_embedder(common, dim);
    let backend = build_backend(common)?;
    MemoryEngine::from_snapshot(snapshot, embedder, backend)
}

/// Snapshot loading for read-only commands that never call the model.
fn load_engine_readonly(common: &CommonOpts, snapshot: &Path) -> Result<MemoryEngine> {
    let dim = snapshot_dim(snapshot)?;
    let embedder = build_embedder(common, dim);
    MemoryEngine::from_snapshot(snapshot, embedder, Arc::new(ScriptedStub::new(vec![])))
}

fn write_audit(path: &Path, summary: &IngestSummary) -> Result<()> {
    let mut out = String::new();
    for outcome in &summary.outcomes {
        out.push_str(
            &serde_json::to_string(outcome).map_err(|e| EngineError::Dataset(e.to_string()))?,
        );
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

fn print_ingest_summary(summary: &IngestSummary, engine: &MemoryEngine, json: bool) {
    if json {
        let value = serde_json::json!({
            "items_ingested": summary.items_ingested,
            "distinct_streams": summary.distinct_streams,
            "duplicate_streams": summary.duplicate_streams,
            "splits_triggered": summary.splits_triggered,
            "stats": engine.stats(),
        });
        emitln!("{}", serde_json::to_string_pretty(&value).unwrap());
        return;
    }
    let stats = engine.stats();
    emitln!(
        "ingested {} items from {} stream(s)",
        summary.items_ingested,
        summary.distinct_streams
    );
    emitln!(
        "clusters: {}  (sizes mean {:.2}, min {}, max {})",
        stats.cluster_count,
        stats.size_mean,
        stats.size_min,
        stats.size_max
    );
    emitln!("splits triggered: {}", summary.splits_triggered);
}

fn cmd_ingest(common: &CommonOpts, data: &Path, out: &Path) -> Result<()> {
    let config = resolve_config(common)?;
    let (dataset, skipped) = QaDataset::read_jsonl(data, common.strict)?;
    if skipped > 0 {
        eprintln!("warning: skipped {skipped} malformed record(s)");
    }
    let embedder = build_embedder(common, config.embedding_dim);
    let backend = build_backend(common)?;
    let mut engine = MemoryEngine::new(config, embedder, backend)?;
    let summary = ingest_dataset(&mut engine, &dataset)?;
    engine.snapshot(out)?;
    if let Some(audit) = &common.audit {
        write_audit(audit, &summary)?;
    }
    print_ingest_summary(&summary, &engine, common.json);
    Ok(())
}

fn cmd_query(common: &CommonOpts, question: &str, snapshot: &Path) -> Result<()> {
    let engine = load_engine(common, snapshot)?;
    let mode = common
        .mode
        .map(retrieval_mode)
        .unwrap_or(engine.config().retrieval_mode);
    let (answer, retrieval) = engine.answer(question, mode)?;
    if common.json {
        let value = serde_json::json!({ "answer": answer, "retrieval": retrieval });
        emitln!("{}", serde_json::to_string_pretty(&value).unwrap());
    } else {
        emitln!("{answer}");
    }
    Ok(())
}

fn format_mean(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{v:.4}"),
        None => "-".to_string(),
    }
}

fn print_report_table(report: &EvalReport) {
    emitln!(
        "{} case(s), {} failed, mode {:?}",
        report.case_count,
        report.failed_count,
        report.mode
    );
    emitln!(
        "{:<10}{:<10}{:<10}{:<10}{:<10}{:<10}",
        "F1",
        "BLEU-1",
        "METEOR",
        "E-Prec",
        "E-Recall",
        "E-F1"
    );
    emitln!(
        "{:<10}{:<10}{:<10}{:<10}{:<10}{:<10}",
        format_mean(report.aggregates.f1),
        format_mean(report.aggregates.bleu1),
        format_mean(report.aggregates.meteor),
        format_mean(report.aggregates.e_prec),
        format_mean(report.aggregates.e_recall),
        format_mean(report.aggregates.e_f1),
    );
    for k in memgrove::metrics::EVAL_KS {
        emitln!(
            "R@{k:<3} {}   nDCG@{k:<3} {}",
            format_mean(report.aggregates.recall_at_k.get(&k).copied()),
            format_mean(report.aggregates.ndcg_at_k.get(&k).copied()),
        );
    }
    if let Some(r) = &report.r_stats {
        emitln!(
            "r: mean {:.4}, std {:.4}, min {:.4}, max {:.4}",
            r.mean,
            r.std,
            r.min,
            r.max
        );
    }
    let stats = &report.cluster_stats;
    emitln!(
        "clusters: {} (sizes mean {:.2}, std {:.2}, min {}, max {})",
        stats.cluster_count,
        stats.size_mean,
        stats.size_std,
        stats.size_min,
        stats.size_max
    );
    emitln!("wall clock: {:.3}s", report.wall_clock.as_secs_f64());
}

fn cmd_evaluate(
    common: &CommonOpts,
    data: &Path,
    snapshot: Option<&Path>,
    report_path: Option<&Path>,
    ablate: Option<&str>,
) -> Result<()> {
    let (dataset, skipped) = QaDataset::read_jsonl(data, common.strict)?;
    if skipped > 0 {
        eprintln!("warning: skipped {skipped} malformed record(s)");
    }

    let (engine, mode) = match snapshot {
        Some(path) => {
            if let Some(ablate) = ablate {
                if ablate != "retrieval=global" {
                    return Err(EngineError::InvalidArgument(format!(
                        "ablation {ablate:?} affects ingestion; evaluate from --data without \
                         --snapshot"
                    )));
                }
            }
            let engine = load_engine(common, path)?;
            let mode = match ablate {
                Some("retrieval=global") => RetrievalMode::Global,
                _ => common
                    .mode
                    .map(retrieval_mode)
                    .unwrap_or(engine.config().retrieval_mode),
            };
            (engine, mode)
        }
        None => {
            let mut config = resolve_config(common)?;
            if let Some(ablate) = ablate {
                apply_ablation(&mut config, ablate)?;
            }
            let embedder = build_embedder(common, config.embedding_dim);
            let backend = build_backend(common)?;
            let mut engine = MemoryEngine::new(config, embedder, backend)?;
            let summary = ingest_dataset(&mut engine, &dataset)?;
            if let Some(audit) = &common.audit {
                write_audit(audit, &summary)?;
            }
            let mode = engine.config().retrieval_mode;
            (engine, mode)
        }
    };

    let report = evaluate(&engine, &dataset, mode);
    if let Some(path) = report_path {
        let json = serde_json::to_string_pretty(&report)
            .map_err(|e| EngineError::Dataset(e.to_string()))?;
        fs::write(path, json)?;
    }
    if common.json {
        emitln!(
            "{}",
            serde_json::to_string_pretty(&report)
                .map_err(|e| EngineError::Dataset(e.to_string()))?
        );
    } else {
        print_report_table(&report);
    }
    Ok(())
}

fn cmd_stats(common: &CommonOpts, snapshot: &Path) -> Result<()> {
    let engine = load_engine_readonly(common, snapshot)?;
    let stats = engine.stats();
    if common.json {
        emitln!("{}", serde_json::to_string_pretty(&stats).unwrap());
        return Ok(());
    }
    emitln!(
        "{} note(s) in {} cluster(s), {} buffered",
        stats.note_count,
        stats.cluster_count,
        stats.buffered_count
    );
    emitln!(
        "sizes: mean {:.2}, std {:.2}, min {}, max {}",
        stats.size_mean,
        stats.size_std,
        stats.size_min,
        stats.size_max
    );
    for cluster in &stats.clusters {
        emitln!(
            "  [{}] {} member(s)  tags: {}  {}",
            cluster.cluster_id,
            cluster.size,
            cluster.tags.join(", "),
            cluster.summary
        );
    }
    Ok(())
}

fn cmd_snapshot(input: &Path, export_notes: Option<&Path>) -> Result<()> {
    let common = CommonOpts {
        config: None,
        full_defaults: false,
        seed: None,
        mode: None,
        strategy: None,
        evolution_scope: None,
        k: None,
        stub: None,
        slm_endpoint: None,
        embeddings_endpoint: None,
        json: false,
        strict: false,
        audit: None,
    };
    let engine = load_engine_readonly(&common, input)?;
    engine.store().check_invariants()?;
    emitln!(
        "snapshot ok: {} note(s), {} cluster(s), {} processed",
        engine.store().note_count(),
        engine.store().cluster_count(),
        engine.store().processed()
    );
    if let Some(path) = export_notes {
        export_notes_jsonl(engine.store(), path)?;
        emitln!("notes exported to {}", path.display());
    }
    Ok(())
}

fn cmd_import(common: &CommonOpts, format: ImportFormat, input: &Path, out: &Path) -> Result<()> {
    let text = fs::read_to_string(input)?;
    let (dataset, skipped) = match format {
        ImportFormat::Hotpotqa => import_hotpotqa(&text, common.strict)?,
        ImportFormat::Locomo => import_locomo(&text, common.strict)?,
    };
    dataset.write_jsonl(out)?;
    emitln!(
        "imported {} record(s), skipped {}",
        dataset.records.len(),
        skipped
    );
    Ok(())
}

fn cmd_synth(
    common: &CommonOpts,
    topics: usize,
    notes_per_topic: usize,
    distractor_rate: f64,
    drift_at: Option<usize>,
    out: &Path,
    labels: Option<&Path>,
) -> Result<()> {
    let spec = SyntheticSpec {
        topic_count: topics,
        notes_per_topic,
        distractor_rate,
        drift_topic_at: drift_at,
        seed: common.seed.unwrap_or(0),
        ..SyntheticSpec::default()
    };
    let output = generate(&spec)?;
    output.dataset.write_jsonl(out)?;
    if let Some(path) = labels {
        let json = serde_json::to_string(&output.labels)
            .map_err(|e| EngineError::Dataset(e.to_string()))?;
        fs::write(path, json)?;
    }
    emitln!(
        "wrote {} record(s) over {} stream item(s) to {}",
        output.dataset.records.len(),
        output.labels.len(),
        out.display()
    );
    Ok(())
}
