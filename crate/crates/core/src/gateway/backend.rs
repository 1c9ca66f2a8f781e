//! Chat backends: the remote HTTP client and the scripted deterministic stub.

use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::embed::InFlightGate;
use crate::error::{EngineError, Result};
use crate::text::truncate_chars;

/// The role under which a prompt is issued; decision tables match on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GatewayRole {
    Annotate,
    SelectCluster,
    GenerateProfile,
    SelectRetrievalClusters,
    Evolve,
    Answer,
}

impl GatewayRole {
    pub fn as_str(&self) -> &'static str {
        match self {
            GatewayRole::Annotate => "annotate",
            GatewayRole::SelectCluster => "select_cluster",
            GatewayRole::GenerateProfile => "generate_profile",
            GatewayRole::SelectRetrievalClusters => "select_retrieval_clusters",
            GatewayRole::Evolve => "evolve",
            GatewayRole::Answer => "answer",
        }
    }
}

/// A model endpoint: takes one prompt, returns raw completion text.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, role: GatewayRole, prompt: &str) -> Result<String>;
}

/// One row of a stub decision table: the first row whose role matches and
/// whose `match` substring occurs in the prompt wins. An empty `match`
/// matches every prompt of that role.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StubRule {
    pub role: GatewayRole,
    #[serde(rename = "match")]
    pub match_substring: String,
    pub response: String,
}

/// Deterministic SLM stand-in replaying a decision table. Unscripted calls
/// fail loudly rather than inventing output.
pub struct ScriptedStub {
    rules: Vec<StubRule>,
}

impl ScriptedStub {
    pub fn new(rules: Vec<StubRule>) -> Self {
        ScriptedStub { rules }
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let rules: Vec<StubRule> = serde_json::from_str(&text)
            .map_err(|e| EngineError::InvalidArgument(format!("stub table parse: {e}")))?;
        Ok(ScriptedStub { rules })
    }
}

impl ChatBackend for ScriptedStub {
    fn complete(&self, role: GatewayRole, prompt: &str) -> Result<String> {
        for rule in &self.rules {
            if rule.role == role && prompt.contains(&rule.match_substring) {
                return Ok(rule.response.clone());
            }
        }
        Err(EngineError::UnscriptedCall {
            role: role.as_str().to_string(),
            prompt_head: truncate_chars(prompt, 80),
        })
    }
}

#[derive(Debug, Clone)]
pub struct RemoteChatConfig {
    pub endpoint: String,
    pub model: String,
    /// Env var holding the bearer token.
    pub api_key_env: String,
    pub max_tokens: u32,
    pub timeout: Duration,
    pub max_in_flight: usize,
    pub max_retries: u32,
}

impl Default for RemoteChatConfig {
    fn default() -> Self {
        RemoteChatConfig {
            endpoint: "http://127.0.0.1:8080/v1/chat/completions".into(),
            model: "slm-default".into(),
            api_key_env: "SLM_API_KEY".into(),
            max_tokens: 512,
            timeout: Duration::from_secs(60),
            max_in_flight: 8,
            max_retries: 3,
        }
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    content: String,
}

/// Blocking chat-completion client. Temperature is pinned to 0 for every
/// role; concurrent calls are bounded by `max_in_flight`.
pub struct RemoteChat {
    config: RemoteChatConfig,
    client: reqwest::blocking::Client,
    api_key: Option<String>,
    gate: InFlightGate,
}

impl RemoteChat {
    pub fn new(config: RemoteChatConfig) -> Self {
        let api_key = std::env::var(&config.api_key_env).ok();
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .expect("reqwest client construction");
        let gate = InFlightGate::new(config.max_in_flight);
        RemoteChat {
            config,
            client,
            api_key,
            gate,
        }
    }

    fn post_once(&self, prompt: &str) -> std::result::Result<String, String> {
        let body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0,
            "max_tokens": self.config.max_tokens,
        });
        let mut request = self.client.post(&self.config.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request.send().map_err(|e| e.to_string())?;
        let status = response.status();
        if !status.is_success() {
            return Err(format!("chat endpoint returned {status}"));
        }
        let parsed: ChatResponse = response.json().map_err(|e| e.to_string())?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|choice| choice.message.content)
            .ok_or_else(|| "chat response carried no choices".to_string())
    }
}

impl ChatBackend for RemoteChat {
    fn complete(&self, _role: GatewayRole, prompt: &str) -> Result<String> {
        self.gate.acquire();
        let result = (|| {
            let mut delay = Duration::from_millis(100);
            let mut last_error = String::new();
            for attempt in 0..=self.config.max_retries {
                if attempt > 0 {
                    std::thread::sleep(delay);
                    delay *= 2;
                }
                match self.post_once(prompt) {
                    Ok(text) => return Ok(text),
                    Err(message) => last_error = message,
                }
            }
            Err(EngineError::Backend {
                message: last_error,
                retries: self.config.max_retries,
            })
        })();
        self.gate.release();
        result
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> ScriptedStub {
        ScriptedStub::new(vec![
            StubRule {
                role: GatewayRole::SelectCluster,
                match_substring: "basketball".into(),
                response: r#"{"choice": "cluster_1"}"#.into(),
            },
            StubRule {
                role: GatewayRole::SelectCluster,
                match_substring: String::new(),
                response: r#"{"choice": "cluster_0"}"#.into(),
            },
        ])
    }

    #[test]
    fn first_matching_rule_wins() {
        let stub = table();
        let hit = stub
            .complete(GatewayRole::SelectCluster, "note about basketball game")
            .unwrap();
        assert_eq!(hit, r#"{"choice": "cluster_1"}"#);
        let wildcard = stub
            .complete(GatewayRole::SelectCluster, "note about gardening")
            .unwrap();
        assert_eq!(wildcard, r#"{"choice": "cluster_0"}"#);
    }

    #[test]
    fn unscripted_role_fails_loudly() {
        let stub = table();
        let err = stub
            .complete(GatewayRole::Answer, "what is the answer?")
            .unwrap_err();
        match err {
            EngineError::UnscriptedCall { role, prompt_head } => {
                assert_eq!(role, "answer");
                assert!(prompt_head.starts_with("what is"));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn decision_table_loads_from_json() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("table.json");
        std::fs::write(
            &path,
            r#"[{"role": "answer", "match": "", "response": "forty-two"}]"#,
        )
        .unwrap();
        let stub = ScriptedStub::from_path(&path).unwrap();
        assert_eq!(
            stub.complete(GatewayRole::Answer, "anything").unwrap(),
            "forty-two"
        );
    }
}
