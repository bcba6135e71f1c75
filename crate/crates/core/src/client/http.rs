//! HTTP clients speaking the common chat-completions / embeddings JSON schema.

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{check_embed_batch, ChatClient, ChatRequest, ClientError, EmbedClient, EmbeddingVector, Throttle};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpConfig {
    pub chat_base_url: String,
    pub chat_model: String,
    pub embed_base_url: String,
    pub embed_model: String,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env_var: String,
    pub max_concurrency: usize,
    pub max_retries: usize,
    pub request_timeout_seconds: u64,
    /// First retry delay; doubles on every further attempt.
    pub backoff_millis: u64,
    pub embed_batch: usize,
    /// Expected embedding dimension; 0 accepts whatever the service returns.
    pub embed_dim: usize,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            chat_base_url: "http://localhost:8000/v1".into(),
            chat_model: String::new(),
            embed_base_url: "http://localhost:8000/v1".into(),
            embed_model: String::new(),
            api_key_env_var: "OPENAI_API_KEY".into(),
            max_concurrency: 8,
            max_retries: 3,
            request_timeout_seconds: 120,
            backoff_millis: 500,
            embed_batch: 64,
            embed_dim: 0,
        }
    }
}

struct Transport {
    agent: ureq::Agent,
    api_key: Option<String>,
    max_retries: usize,
    backoff: Duration,
    throttle: Arc<Throttle>,
}

enum Failure {
    Retryable(String),
    Fatal(ClientError),
}

impl Transport {
    fn new(config: &HttpConfig, throttle: Arc<Throttle>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.request_timeout_seconds.max(1))))
            .http_status_as_error(false)
            .build()
            .into();
        let api_key = std::env::var(&config.api_key_env_var).ok().filter(|k| !k.is_empty());
        Self {
            agent,
            api_key,
            max_retries: config.max_retries,
            backoff: Duration::from_millis(config.backoff_millis),
            throttle,
        }
    }

    fn attempt(&self, url: &str, body: &Value) -> Result<Value, Failure> {
        let _permit = self.throttle.acquire();
        let mut request = self.agent.post(url).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            request = request.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = request.send_json(body).map_err(|e| Failure::Retryable(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response.body_mut().read_to_string().map_err(|e| Failure::Retryable(e.to_string()))?;
        if (200..300).contains(&status) {
            return serde_json::from_str(&text).map_err(|e| Failure::Fatal(ClientError::Decode(e.to_string())));
        }
        if status == 429 || status >= 500 {
            return Err(Failure::Retryable(format!("status {status}: {}", error_message(&text))));
        }
        Err(Failure::Fatal(ClientError::Service { status, message: error_message(&text) }))
    }

    fn post(&self, url: &str, body: &Value) -> Result<Value, ClientError> {
        let attempts = self.max_retries + 1;
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                let delay = self.backoff * 2u32.saturating_pow(attempt as u32 - 1);
                log::debug!("retrying {url} in {delay:?} after: {last}");
                std::thread::sleep(delay);
            }
            match self.attempt(url, body) {
                Ok(v) => return Ok(v),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retryable(msg)) => last = msg,
            }
        }
        Err(ClientError::Transport { attempts, message: last })
    }
}

fn error_message(body: &str) -> String {
    serde_json::from_str::<Value>(body)
        .ok()
        .and_then(|v| {
            v.pointer("/error/message")
                .or_else(|| v.get("message"))
                .or_else(|| v.get("error"))
                .and_then(Value::as_str)
                .map(str::to_string)
        })
        .unwrap_or_else(|| body.trim().to_string())
}

fn endpoint(base: &str, path: &str) -> String {
    format!("{}/{path}", base.trim_end_matches('/'))
}

pub struct HttpChatClient {
    transport: Transport,
    url: String,
    model: String,
}

impl HttpChatClient {
    pub fn new(config: &HttpConfig, throttle: Arc<Throttle>) -> Self {
        Self {
            transport: Transport::new(config, throttle),
            url: endpoint(&config.chat_base_url, "chat/completions"),
            model: config.chat_model.clone(),
        }
    }

    pub fn throttle(&self) -> &Throttle {
        &self.transport.throttle
    }
}

impl ChatClient for HttpChatClient {
    fn chat(&self, request: &ChatRequest) -> Result<String, ClientError> {
        request.validate()?;
        let body = json!({
            "model": self.model,
            "messages": request.messages,
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        });
        let response = self.transport.post(&self.url, &body)?;
        response
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| ClientError::Decode("missing choices[0].message.content".into()))
    }
}

pub struct HttpEmbedClient {
    transport: Transport,
    url: String,
    model: String,
    batch: usize,
    dim: usize,
}

impl HttpEmbedClient {
    pub fn new(config: &HttpConfig, throttle: Arc<Throttle>) -> Self {
        Self {
            transport: Transport::new(config, throttle),
            url: endpoint(&config.embed_base_url, "embeddings"),
            model: config.embed_model.clone(),
            batch: config.embed_batch.max(1),
            dim: config.embed_dim,
        }
    }
}

impl EmbedClient for HttpEmbedClient {
    fn dim(&self) -> usize {
        self.dim
    }

    fn max_batch(&self) -> usize {
        self.batch
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector<f64>>, ClientError> {
        check_embed_batch(texts, self.batch)?;
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let body = json!({ "model": self.model, "input": texts });
        let response = self.transport.post(&self.url, &body)?;
        let data = response
            .get("data")
            .and_then(Value::as_array)
            .ok_or_else(|| ClientError::Decode("missing data array".into()))?;
        if data.len() != texts.len() {
            return Err(ClientError::Decode(format!("expected {} embeddings, got {}", texts.len(), data.len())));
        }
        let mut slots: Vec<Option<EmbeddingVector<f64>>> = vec![None; texts.len()];
        for (pos, item) in data.iter().enumerate() {
            let index = item.get("index").and_then(Value::as_u64).map(|i| i as usize).unwrap_or(pos);
            let values: Vec<f64> = item
                .get("embedding")
                .and_then(Value::as_array)
                .ok_or_else(|| ClientError::Decode("missing embedding".into()))?
                .iter()
                .map(|v| v.as_f64().ok_or_else(|| ClientError::Decode("non-numeric component".into())))
                .collect::<Result<_, _>>()?;
            let vector = EmbeddingVector::new(values)?;
            if self.dim != 0 && vector.dim() != self.dim {
                return Err(ClientError::Decode(format!("expected dimension {}, got {}", self.dim, vector.dim())));
            }
            let slot = slots
                .get_mut(index)
                .ok_or_else(|| ClientError::Decode(format!("embedding index {index} out of range")))?;
            *slot = Some(vector);
        }
        let vectors: Vec<_> = slots
            .into_iter()
            .map(|s| s.ok_or_else(|| ClientError::Decode("missing embedding index".into())))
            .collect::<Result<_, _>>()?;
        if vectors.windows(2).any(|w| w[0].dim() != w[1].dim()) {
            return Err(ClientError::Decode("inconsistent embedding dimensions".into()));
        }
        Ok(vectors)
    }
}
