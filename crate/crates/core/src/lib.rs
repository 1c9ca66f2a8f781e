//! Self-organizing agentic memory engine: notes are annotated, embedded, and
//! routed into evolving clusters; queries run cluster-filtered retrieval.

pub mod clustering;
pub mod config;
pub mod dataset;
pub mod embed;
pub mod engine;
pub mod error;
pub mod evolution;
pub mod gateway;
pub mod harness;
pub mod metrics;
pub mod retrieval;
pub mod store;
pub mod synth;
pub mod text;

pub use config::{EngineConfig, EvolutionScope, RetrievalMode, RoutingStrategy};
pub use engine::{IngestOutcome, MemoryEngine, RouteDecision};
pub use error::{EngineError, Result};
pub use retrieval::{RetrievalModeUsed, RetrievalResult};
