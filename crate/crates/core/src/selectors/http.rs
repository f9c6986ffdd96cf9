//! Remote providers speaking a minimal completions-style wire protocol.
//!
//! Embedding call: `POST {model, input}` returning `{"vector": [..]}`.
//! Chat call: `POST {model, messages, temperature}` returning `{"text": ..}`.
//! OpenAI-shaped responses (`data[0].embedding`, `choices[0].message.content`)
//! are accepted as well. Temperature is pinned to 0. Credentials come from an
//! environment variable named by the caller and are sent as a bearer token;
//! they are never logged or serialized. With the verbose log level enabled the
//! request/response bodies are logged (they contain no credentials).

use std::time::Duration;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::selectors::llm::ChatClient;
use crate::selectors::{EmbeddingProvider, EmbeddingVector};

#[derive(Debug, Clone)]
pub struct HttpConfig {
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token, if any.
    pub api_key_env: Option<String>,
    pub timeout: Duration,
    pub max_retries: u32,
}

impl HttpConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        HttpConfig {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key_env: None,
            timeout: Duration::from_secs(30),
            max_retries: 3,
        }
    }

    fn api_key(&self) -> Option<String> {
        self.api_key_env
            .as_deref()
            .and_then(|name| std::env::var(name).ok())
    }

    pub fn describe(&self) -> serde_json::Value {
        serde_json::json!({
            "endpoint": self.endpoint,
            "model": self.model,
            "api_key_env": self.api_key_env,
            "timeout_ms": self.timeout.as_millis() as u64,
            "max_retries": self.max_retries,
        })
    }
}

fn retryable_status(code: u16) -> bool {
    code == 429 || (500..600).contains(&code)
}

/// POSTs `body` with retry on transient failures (timeouts, connection drops,
/// 429/5xx). Exponential backoff starting at 100 ms.
fn post_json(config: &HttpConfig, body: &serde_json::Value) -> Result<serde_json::Value> {
    let mut attempt = 0;
    loop {
        log::debug!("POST {} body={}", config.endpoint, body);
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(true)
            .build()
            .into();
        let mut request = agent.post(&config.endpoint);
        if let Some(key) = config.api_key() {
            request = request.header("Authorization", &format!("Bearer {key}"));
        }
        let outcome = request
            .send_json(body)
            .and_then(|mut response| response.body_mut().read_json::<serde_json::Value>());
        let error = match outcome {
            Ok(value) => {
                log::debug!("response from {}: {}", config.endpoint, value);
                return Ok(value);
            }
            Err(ureq::Error::StatusCode(code)) => Error::Provider {
                retryable: retryable_status(code),
                message: format!("{} answered HTTP {code}", config.endpoint),
            },
            Err(other) => Error::Provider {
                retryable: true,
                message: format!("transport failure calling {}: {other}", config.endpoint),
            },
        };
        let retryable = matches!(error, Error::Provider { retryable: true, .. });
        if !retryable || attempt >= config.max_retries {
            return Err(error);
        }
        let backoff = Duration::from_millis(100 * (1 << attempt.min(6)));
        log::debug!("retrying {} after {:?}: {error}", config.endpoint, backoff);
        std::thread::sleep(backoff);
        attempt += 1;
    }
}

/// Remote embedding provider. The first response fixes the dimension; later
/// responses with a different length are a provider-contract error (checked
/// by [`super::embedding::EmbeddingCache`]).
pub struct HttpEmbedder {
    config: HttpConfig,
    dim: std::sync::OnceLock<usize>,
}

#[derive(Deserialize)]
struct EmbeddingPayload {
    #[serde(default)]
    vector: Option<Vec<f64>>,
    #[serde(default)]
    data: Option<Vec<EmbeddingDatum>>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
}

impl HttpEmbedder {
    pub fn new(config: HttpConfig) -> Self {
        HttpEmbedder {
            config,
            dim: std::sync::OnceLock::new(),
        }
    }
}

impl EmbeddingProvider for HttpEmbedder {
    fn name(&self) -> &str {
        "http-embedding"
    }

    fn dim(&self) -> usize {
        // Unknown until the first call succeeds.
        self.dim.get().copied().unwrap_or(0)
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        if text.trim().is_empty() {
            return Err(Error::EmptyInput("text to embed".into()));
        }
        let body = serde_json::json!({ "model": self.config.model, "input": text });
        let raw = post_json(&self.config, &body)?;
        let payload: EmbeddingPayload = serde_json::from_value(raw)
            .map_err(|e| Error::ProviderContract(format!("malformed embedding payload: {e}")))?;
        let values = payload
            .vector
            .or_else(|| payload.data.and_then(|mut d| d.pop().map(|x| x.embedding)))
            .ok_or_else(|| {
                Error::ProviderContract("payload carries neither 'vector' nor 'data[].embedding'".into())
            })?;
        if values.is_empty() {
            return Err(Error::ProviderContract("empty embedding vector".into()));
        }
        let dim = *self.dim.get_or_init(|| values.len());
        if values.len() != dim {
            return Err(Error::ProviderContract(format!(
                "embedding dimension changed from {dim} to {}",
                values.len()
            )));
        }
        Ok(EmbeddingVector { values })
    }

    fn describe(&self) -> serde_json::Value {
        let mut value = self.config.describe();
        value["kind"] = "http-embedding".into();
        value
    }
}

/// Remote chat client with temperature pinned to 0.
pub struct HttpChatClient {
    config: HttpConfig,
}

#[derive(Deserialize)]
struct ChatPayload {
    #[serde(default)]
    text: Option<String>,
    #[serde(default)]
    choices: Option<Vec<ChatChoice>>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessagePayload,
}

#[derive(Deserialize)]
struct ChatMessagePayload {
    content: String,
}

impl HttpChatClient {
    pub fn new(config: HttpConfig) -> Self {
        HttpChatClient { config }
    }
}

impl ChatClient for HttpChatClient {
    fn name(&self) -> &str {
        "http-chat"
    }

    fn complete(&self, prompt: &str) -> Result<String> {
        let body = serde_json::json!({
            "model": self.config.model,
            "messages": [{ "role": "user", "content": prompt }],
            "temperature": 0.0,
        });
        let raw = post_json(&self.config, &body)?;
        let payload: ChatPayload = serde_json::from_value(raw)
            .map_err(|e| Error::ProviderContract(format!("malformed chat payload: {e}")))?;
        payload
            .text
            .or_else(|| {
                payload
                    .choices
                    .and_then(|mut c| c.pop().map(|x| x.message.content))
            })
            .ok_or_else(|| {
                Error::ProviderContract("payload carries neither 'text' nor 'choices[].message.content'".into())
            })
    }

    fn describe(&self) -> serde_json::Value {
        let mut value = self.config.describe();
        value["kind"] = "http-chat".into();
        value
    }
}
