//! HTTP client for a hosted embedding endpoint.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use crate::error::{EngineError, Result};

use super::{Embedder, EmbeddingVector};

/// Counting semaphore bounding in-flight requests.
pub(crate) struct InFlightGate {
    permits: Mutex<usize>,
    freed: Condvar,
}

impl InFlightGate {
    pub(crate) fn new(limit: usize) -> Self {
        InFlightGate {
            permits: Mutex::new(limit.max(1)),
            freed: Condvar::new(),
        }
    }

    pub(crate) fn acquire(&self) {
        let mut permits = self.permits.lock().unwrap();
        while *permits == 0 {
            permits = self.freed.wait(permits).unwrap();
        }
        *permits -= 1;
    }

    pub(crate) fn release(&self) {
        let mut permits = self.permits.lock().unwrap();
        *permits += 1;
        self.freed.notify_one();
    }
}

#[derive(Debug, Clone)]
pub struct RemoteEmbedderConfig {
    pub endpoint: String,
    pub model: String,
    pub dim: usize,
    /// Env var holding the bearer token.
    pub api_key_env: String,
    pub max_in_flight: usize,
    pub max_retries: u32,
}

impl Default for RemoteEmbedderConfig {
    fn default() -> Self {
        RemoteEmbedderConfig {
            endpoint: "http://127.0.0.1:8080/v1/embeddings".into(),
            model: "text-embedding-default".into(),
            dim: 128,
            api_key_env: "EMBEDDINGS_API_KEY".into(),
            max_in_flight: 8,
            max_retries: 3,
        }
    }
}

#[derive(Deserialize)]
struct EmbeddingsResponse {
    data: Vec<EmbeddingRow>,
}

#[derive(Deserialize)]
struct EmbeddingRow {
    embedding: Vec<f32>,
}

/// Blocking client for a JSON-over-HTTP embedding service. Stateless after
/// construction; concurrent calls are bounded by `max_in_flight`.
pub struct RemoteEmbedder {
    config: RemoteEmbedderConfig,
    client: reqwest::blocking::Client,
    api_key: Option<String>,
    gate: InFlightGate,
}

impl RemoteEmbedder {
    pub fn new(config: RemoteEmbedderConfig) -> Self {
        let api_key = std::env::var(&config.api_key_env).ok();
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .expect("reqwest client construction");
        let gate = InFlightGate::new(config.max_in_flight);
        RemoteEmbedder {
            config,
            client,
            api_key,
            gate,
        }
    }

    fn post_once(&self, texts: &[&str]) -> std::result::Result<Vec<EmbeddingVector>, String> {
        let body = json!({ "model": self.config.model, "input": texts });
        let mut request = self.client.post(&self.config.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request.send().map_err(|e| e.to_string())?;
        let status = response.status();
        if !status.is_success() {
            return Err(format!("embedding endpoint returned {status}"));
        }
        let parsed: EmbeddingsResponse = response.json().map_err(|e| e.to_string())?;
        if parsed.data.len() != texts.len() {
            return Err(format!(
                "expected {} embeddings, got {}",
                texts.len(),
                parsed.data.len()
            ));
        }
        parsed
            .data
            .into_iter()
            .map(|row| EmbeddingVector::new(row.embedding).map_err(|e| e.to_string()))
            .collect()
    }

    fn post_with_retry(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
        self.gate.acquire();
        let result = self.post_with_retry_inner(texts);
        self.gate.release();
        result
    }

    fn post_with_retry_inner(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
        let mut delay = Duration::from_millis(100);
        let mut last_error = String::new();
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                std::thread::sleep(delay);
                delay *= 2;
            }
            match self.post_once(texts) {
                Ok(vectors) => {
                    for v in &vectors {
                        if v.dim() != self.config.dim {
                            return Err(EngineError::DimensionMismatch {
                                expected: self.config.dim,
                                got: v.dim(),
                            });
                        }
                    }
                    return Ok(vectors);
                }
                Err(message) => last_error = message,
            }
        }
        Err(EngineError::Backend {
            message: last_error,
            retries: self.config.max_retries,
        })
    }
}

impl Embedder for RemoteEmbedder {
    fn dim(&self) -> usize {
        self.config.dim
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        let mut vectors = self.post_with_retry(&[text])?;
        Ok(vectors.remove(0))
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        self.post_with_retry(texts)
    }
}
