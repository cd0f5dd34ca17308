use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{ChatBackend, ChatRequest, Completion, GatewayError, GenerationParams};
use crate::prompt::PromptBundle;

const MAX_BACKOFF: Duration = Duration::from_secs(30);

/// A chat-completion server speaking the common `/v1/chat/completions`
/// protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEndpoint {
    pub base_url: String,
    pub model_name: String,
    #[serde(skip)]
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub max_retries: u32,
    /// Delay before the first retry; doubles on every further retry.
    pub backoff: Duration,
}

impl ModelEndpoint {
    pub fn new(base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model_name: model_name.into(),
            api_key: None,
            timeout: Duration::from_secs(120),
            max_retries: 3,
            backoff: Duration::from_millis(500),
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.timeout.is_zero() {
            return Err(GatewayError::Config("timeout must be positive".into()));
        }
        if !(self.base_url.starts_with("http://") || self.base_url.starts_with("https://")) {
            return Err(GatewayError::Config(format!("base_url `{}` is not an http(s) URL", self.base_url)));
        }
        Ok(())
    }

    pub fn completions_url(&self) -> String {
        format!("{}/v1/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

#[derive(Debug)]
pub struct HttpBackend {
    endpoint: ModelEndpoint,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(endpoint: ModelEndpoint) -> Result<Self, GatewayError> {
        endpoint.validate()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(endpoint.timeout)
            .build()
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        Ok(Self { endpoint, client })
    }

    pub fn endpoint(&self) -> &ModelEndpoint {
        &self.endpoint
    }

    fn request_body(&self, request: &ChatRequest<'_>) -> serde_json::Value {
        let mut body = json!({
            "model": request.model,
            "messages": request.bundle.messages(),
            "temperature": request.params.temperature,
            "max_tokens": request.params.max_tokens,
        });
        if let Some(seed) = request.params.seed {
            body["seed"] = json!(seed);
        }
        body
    }
}

fn retryable_status(status: u16) -> bool {
    status == 429 || status >= 500
}

fn message_text(payload: &serde_json::Value) -> Result<String, GatewayError> {
    payload
        .pointer("/choices/0/message/content")
        .and_then(|c| c.as_str())
        .map(str::to_string)
        .ok_or_else(|| GatewayError::Payload("missing choices[0].message.content".into()))
}

impl ChatBackend for HttpBackend {
    fn complete(&self, request: &ChatRequest<'_>) -> Result<Completion, GatewayError> {
        let body = self.request_body(request);
        let url = self.endpoint.completions_url();
        let started = Instant::now();
        let mut delay = self.endpoint.backoff;
        let mut attempts = 0;
        loop {
            attempts += 1;
            let mut call = self.client.post(&url).json(&body);
            if let Some(key) = &self.endpoint.api_key {
                call = call.bearer_auth(key);
            }
            let failure = match call.send() {
                Ok(resp) => {
                    let status = resp.status().as_u16();
                    let text = resp.text().unwrap_or_default();
                    if (200..300).contains(&status) {
                        let payload: serde_json::Value = serde_json::from_str(&text)
                            .map_err(|e| GatewayError::Payload(e.to_string()))?;
                        return Ok(Completion {
                            text: message_text(&payload)?,
                            attempts,
                            latency: started.elapsed(),
                        });
                    }
                    let err = GatewayError::Status { status, attempts, body: text };
                    if !retryable_status(status) {
                        return Err(err);
                    }
                    err
                }
                Err(e) => GatewayError::Transport { attempts, message: e.to_string() },
            };
            if attempts > self.endpoint.max_retries {
                return Err(failure);
            }
            log::debug!("attempt {attempts} against {url} failed: {failure}; retrying in {delay:?}");
            thread::sleep(delay);
            delay = (delay * 2).min(MAX_BACKOFF);
        }
    }
}

/// Single chat completion against `endpoint`.
pub fn query_model(
    endpoint: &ModelEndpoint,
    bundle: &PromptBundle,
    params: &GenerationParams,
) -> Result<Completion, GatewayError> {
    let backend = HttpBackend::new(endpoint.clone())?;
    backend.complete(&ChatRequest {
        model: &endpoint.model_name,
        agent_id: "",
        bundle,
        params,
    })
}
