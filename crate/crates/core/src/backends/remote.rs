//! OpenAI-compatible chat-completions and embeddings client.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{BackendError, Embedder, EmbeddingVector, ExtractionRequest, LanguageModel};

/// Environment variable holding the API key.
pub const API_KEY_ENV: &str = "KGFORGE_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    pub base_url: String,
    pub chat_model: String,
    pub embedding_model: String,
    /// Output dimension of the embedding model.
    pub dimension: usize,
    pub max_in_flight: usize,
    pub timeout_secs: u64,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".into(),
            chat_model: "gpt-4o".into(),
            embedding_model: "text-embedding-3-large".into(),
            dimension: 3072,
            max_in_flight: 4,
            timeout_secs: 120,
        }
    }
}

/// Counting semaphore bounding concurrent requests.
struct Permits {
    free: Mutex<usize>,
    released: Condvar,
}

struct Permit<'a>(&'a Permits);

impl Permits {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n.max(1)),
            released: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().expect("permit lock poisoned");
        while *free == 0 {
            free = self.released.wait(free).expect("permit lock poisoned");
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("permit lock poisoned") += 1;
        self.0.released.notify_one();
    }
}

pub struct RemoteBackend {
    config: RemoteConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
    permits: Permits,
}

impl std::fmt::Debug for RemoteBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteBackend")
            .field("config", &self.config)
            .field("api_key", &self.api_key.as_ref().map(|_| "***"))
            .finish()
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
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    #[serde(default)]
    index: usize,
    embedding: Vec<f64>,
}

impl RemoteBackend {
    /// Reads the API key from [`API_KEY_ENV`] when it is set.
    pub fn from_env(config: RemoteConfig) -> Self {
        let key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        Self::new(config, key)
    }

    pub fn new(config: RemoteConfig, api_key: Option<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs.max(1))))
            .build()
            .new_agent();
        let permits = Permits::new(config.max_in_flight);
        Self {
            config,
            api_key,
            agent,
            permits,
        }
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    fn post<T: serde::de::DeserializeOwned>(
        &self,
        path: &str,
        body: serde_json::Value,
    ) -> Result<T, BackendError> {
        let _permit = self.permits.acquire();
        let url = format!("{}/{path}", self.config.base_url.trim_end_matches('/'));
        let mut request = self.agent.post(&url);
        if let Some(key) = &self.api_key {
            request = request.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = request
            .send_json(body)
            .map_err(|e| BackendError::Unreachable(format!("POST {url}: {e}")))?;
        response
            .body_mut()
            .read_json::<T>()
            .map_err(|e| BackendError::InvalidData(format!("POST {url}: {e}")))
    }
}

impl LanguageModel for RemoteBackend {
    fn complete(&self, request: &ExtractionRequest) -> Result<String, BackendError> {
        let body = json!({
            "model": self.config.chat_model,
            "temperature": 0,
            "response_format": {"type": "json_object"},
            "messages": [
                {"role": "system", "content": request.render_system_prompt()},
                {"role": "user", "content": request.context},
            ],
        });
        let response: ChatResponse = self.post("chat/completions", body)?;
        // an empty reply is malformed output, not a transport failure
        Ok(response
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .unwrap_or_default())
    }
}

impl Embedder for RemoteBackend {
    fn dimension(&self) -> usize {
        self.config.dimension
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, BackendError> {
        let body = json!({"model": self.config.embedding_model, "input": texts});
        let mut response: EmbeddingResponse = self.post("embeddings", body)?;
        response.data.sort_by_key(|d| d.index);
        response
            .data
            .into_iter()
            .map(|d| {
                if d.embedding.len() != self.config.dimension {
                    return Err(BackendError::DimensionDrift {
                        expected: self.config.dimension,
                        found: d.embedding.len(),
                    });
                }
                EmbeddingVector::normalized(d.embedding)
                    .map_err(|e| BackendError::InvalidData(e.to_string()))
            })
            .collect()
    }
}
