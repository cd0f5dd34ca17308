//! Chat-completion access, response parsing and decision records.

mod http;
mod mock;
mod parse;
mod store;

pub use http::{query_model, HttpBackend, ModelEndpoint};
pub use mock::{MockBackend, MockReply};
pub use parse::{extract_choice, parse_response, AliasTable, ChoiceError, ParseError, ParsedDecision};
pub use store::{load_records, RecordStore, StoreError};

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::INVALID_LABEL;
use crate::prompt::PromptBundle;
use crate::similarity::SimilarityBreakdown;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl GenerationParams {
    pub fn new(temperature: f64, max_tokens: u32) -> Result<Self, GatewayError> {
        let p = Self { temperature, max_tokens, seed: None };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(GatewayError::Config(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(GatewayError::Config("max_tokens must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("invalid gateway configuration: {0}")]
    Config(String),
    #[error("endpoint returned status {status} after {attempts} attempt(s): {body}")]
    Status { status: u16, attempts: u32, body: String },
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("malformed completion payload: {0}")]
    Payload(String),
}

impl GatewayError {
    /// Client errors other than rate limiting are tied to the request
    /// itself; everything else means the endpoint is unusable right now.
    pub fn is_request_specific(&self) -> bool {
        matches!(self, GatewayError::Status { status, .. } if (400..500).contains(status) && *status != 429)
    }
}

/// One chat-completion call.
#[derive(Debug, Clone, Copy)]
pub struct ChatRequest<'a> {
    pub model: &'a str,
    pub agent_id: &'a str,
    pub bundle: &'a PromptBundle,
    pub params: &'a GenerationParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub attempts: u32,
    pub latency: Duration,
}

pub trait ChatBackend: Send + Sync {
    fn complete(&self, request: &ChatRequest<'_>) -> Result<Completion, GatewayError>;
}

/// A canonical mode or the reserved invalid marker.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum Prediction {
    Mode(String),
    Invalid,
}

impl Prediction {
    pub fn mode(&self) -> Option<&str> {
        match self {
            Prediction::Mode(m) => Some(m),
            Prediction::Invalid => None,
        }
    }
}

impl From<String> for Prediction {
    fn from(s: String) -> Self {
        if s == INVALID_LABEL {
            Prediction::Invalid
        } else {
            Prediction::Mode(s)
        }
    }
}

impl From<Prediction> for String {
    fn from(p: Prediction) -> Self {
        match p {
            Prediction::Mode(m) => m,
            Prediction::Invalid => INVALID_LABEL.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExemplarRef {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub similarity: Option<SimilarityBreakdown>,
}

/// One persisted decision of a synthetic commuter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub agent_id: String,
    pub config_fingerprint: String,
    pub template_hash: String,
    pub predicted_mode: Prediction,
    #[serde(default)]
    pub reasoning: String,
    pub raw_response: String,
    /// Responses that failed to parse and were followed by a re-query.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub discarded_responses: Vec<String>,
    pub latency_ms: u64,
    pub attempt_count: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub exemplars: Vec<ExemplarRef>,
}

impl DecisionRecord {
    /// An `INVALID` record with no model response.
    pub fn invalid(agent_id: &str, fingerprint: &str, template_hash: &str, failure: Option<String>) -> Self {
        Self {
            agent_id: agent_id.to_string(),
            config_fingerprint: fingerprint.to_string(),
            template_hash: template_hash.to_string(),
            predicted_mode: Prediction::Invalid,
            reasoning: String::new(),
            raw_response: String::new(),
            discarded_responses: Vec::new(),
            latency_ms: 0,
            attempt_count: 0,
            failure,
            exemplars: Vec::new(),
        }
    }
}

/// Queries the backend and turns the answer into a record. A response that
/// cannot be parsed is re-queried once; a second failure, an unknown mode
/// or a request-specific rejection yields an `INVALID` record. Endpoint
/// failures are returned as errors so the caller can stop and resume later.
pub fn decide(
    backend: &dyn ChatBackend,
    request: &ChatRequest<'_>,
    aliases: &AliasTable,
    fingerprint: &str,
) -> Result<DecisionRecord, GatewayError> {
    let mut record = DecisionRecord::invalid(request.agent_id, fingerprint, &request.bundle.template_hash, None);

    for round in 0..2 {
        let completion = match backend.complete(request) {
            Ok(c) => c,
            Err(e) if e.is_request_specific() => {
                if let GatewayError::Status { attempts, body, .. } = &e {
                    record.attempt_count += attempts;
                    record.raw_response = body.clone();
                }
                record.failure = Some(e.to_string());
                return Ok(record);
            }
            Err(e) => return Err(e),
        };
        record.attempt_count += completion.attempts;
        record.latency_ms += completion.latency.as_millis() as u64;
        if round > 0 {
            let previous = std::mem::take(&mut record.raw_response);
            record.discarded_responses.push(previous);
        }
        record.raw_response = completion.text;

        match parse_response(&record.raw_response) {
            Ok(parsed) => {
                record.reasoning = parsed.reasoning.clone();
                match extract_choice(&parsed, &request.bundle.available_modes, aliases) {
                    Ok(mode) => {
                        record.predicted_mode = Prediction::Mode(mode);
                        record.failure = None;
                    }
                    Err(e) => record.failure = Some(e.to_string()),
                }
                return Ok(record);
            }
            Err(e) => record.failure = Some(e.to_string()),
        }
    }
    Ok(record)
}
