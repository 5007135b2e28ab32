//! OpenAI-compatible HTTP provider for chat completions and embeddings.

use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde_json::{json, Value};
use ureq::Agent;

use super::{ChatProvider, GatewayError, ProviderRequest};
use crate::mining::{EmbedError, Embedder};

/// Serialized token bucket shared by every request of one provider.
#[derive(Debug)]
pub struct TokenBucket {
    rate_per_sec: f64,
    capacity: f64,
    state: Mutex<(f64, Instant)>,
}

impl TokenBucket {
    pub fn new(rate_per_sec: f64) -> Self {
        let rate = rate_per_sec.max(f64::MIN_POSITIVE);
        let capacity = rate.max(1.0);
        TokenBucket {
            rate_per_sec: rate,
            capacity,
            state: Mutex::new((capacity, Instant::now())),
        }
    }

    /// Blocks until a token is available, then consumes it.
    pub fn acquire(&self) {
        loop {
            let wait = {
                let mut guard = self.state.lock().expect("token bucket lock");
                let (tokens, last) = &mut *guard;
                let now = Instant::now();
                *tokens = (*tokens + now.duration_since(*last).as_secs_f64() * self.rate_per_sec)
                    .min(self.capacity);
                *last = now;
                if *tokens >= 1.0 {
                    *tokens -= 1.0;
                    return;
                }
                (1.0 - *tokens) / self.rate_per_sec
            };
            std::thread::sleep(Duration::from_secs_f64(wait));
        }
    }
}

#[derive(Debug, Clone)]
struct Endpoint {
    base_url: String,
    api_key: Option<String>,
    timeout_s: u64,
    agent: Agent,
    bucket: Arc<TokenBucket>,
}

impl Endpoint {
    fn new(base_url: &str, api_key: Option<String>, timeout_s: u64, bucket: Arc<TokenBucket>) -> Self {
        let agent: Agent = Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(timeout_s)))
            .build()
            .into();
        Endpoint {
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key,
            timeout_s,
            agent,
            bucket,
        }
    }

    fn post(&self, path: &str, body: &Value) -> Result<Value, GatewayError> {
        self.bucket.acquire();
        let mut req = self.agent.post(format!("{}/{path}", self.base_url));
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let map_err = |e: ureq::Error| match e {
            ureq::Error::Timeout(_) => GatewayError::Timeout(self.timeout_s),
            other => GatewayError::ProviderUnavailable(other.to_string()),
        };
        req.send_json(body)
            .map_err(map_err)?
            .body_mut()
            .read_json::<Value>()
            .map_err(map_err)
    }
}

/// Chat provider speaking the `/chat/completions` protocol.
#[derive(Debug, Clone)]
pub struct HttpProvider {
    id: String,
    model: String,
    endpoint: Endpoint,
}

impl HttpProvider {
    pub fn new(
        base_url: &str,
        model: &str,
        api_key: Option<String>,
        timeout_s: u64,
        bucket: Arc<TokenBucket>,
    ) -> Self {
        HttpProvider {
            id: format!("http:{model}"),
            model: model.to_string(),
            endpoint: Endpoint::new(base_url, api_key, timeout_s, bucket),
        }
    }
}

impl ChatProvider for HttpProvider {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &ProviderRequest<'_>) -> Result<String, GatewayError> {
        let mut content = vec![json!({"type": "text", "text": request.message})];
        for image in request.images {
            content.push(json!({"type": "image_url", "image_url": {"url": image.data_url()}}));
        }
        let body = json!({
            "model": self.model,
            "temperature": 0,
            "messages": [{"role": "user", "content": content}],
        });
        let reply = self.endpoint.post("chat/completions", &body)?;
        reply["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| GatewayError::ProviderUnavailable("reply without message content".into()))
    }
}

/// Embedding provider speaking the `/embeddings` protocol.
#[derive(Debug, Clone)]
pub struct HttpEmbedder {
    id: String,
    model: String,
    dim: usize,
    endpoint: Endpoint,
}

impl HttpEmbedder {
    pub fn new(
        base_url: &str,
        model: &str,
        dim: usize,
        api_key: Option<String>,
        timeout_s: u64,
        bucket: Arc<TokenBucket>,
    ) -> Self {
        HttpEmbedder {
            id: format!("http:{model}"),
            model: model.to_string(),
            dim,
            endpoint: Endpoint::new(base_url, api_key, timeout_s, bucket),
        }
    }
}

impl Embedder for HttpEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_raw(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbedError> {
        let body = json!({"model": self.model, "input": texts});
        let reply = self
            .endpoint
            .post("embeddings", &body)
            .map_err(|e| EmbedError::ProviderUnavailable(e.to_string()))?;
        let data = reply["data"]
            .as_array()
            .ok_or_else(|| EmbedError::ProviderUnavailable("reply without data".into()))?;
        let mut out = Vec::with_capacity(data.len());
        for item in data {
            let vector: Vec<f64> = item["embedding"]
                .as_array()
                .ok_or_else(|| EmbedError::ProviderUnavailable("item without embedding".into()))?
                .iter()
                .map(|v| v.as_f64().unwrap_or(0.0))
                .collect();
            if vector.len() != self.dim {
                return Err(EmbedError::DimensionMismatch {
                    expected: self.dim,
                    actual: vector.len(),
                });
            }
            out.push(vector);
        }
        if out.len() != texts.len() {
            return Err(EmbedError::ProviderUnavailable(format!(
                "expected {} embeddings, got {}",
                texts.len(),
                out.len()
            )));
        }
        Ok(out)
    }
}
