use std::collections::{HashMap, VecDeque};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde_json::json;
use sha2::{Digest, Sha256};

use super::{ChatBackend, ChatRequest, Completion, GatewayError};
use crate::prompt::PromptStyle;

#[derive(Debug, Clone, PartialEq)]
pub enum MockReply {
    Text(String),
    /// Simulated non-success HTTP status.
    Status(u16),
}

#[derive(Debug)]
enum Behavior {
    Fixed(String),
    Scripted(Mutex<VecDeque<MockReply>>),
    Echo(HashMap<String, String>),
    Synthetic { truths: HashMap<String, String>, seed: u64 },
}

/// In-process stand-in for a model server. Every variant is deterministic,
/// and none of them report latency, so stores written against a mock are
/// byte-reproducible.
#[derive(Debug)]
pub struct MockBackend {
    behavior: Behavior,
    calls: AtomicUsize,
}

const REASONS: [&str; 6] = [
    "the travel time is shorter",
    "the cost is lower for this trip",
    "it offers more comfort on a long ride",
    "it is the more convenient door-to-door option",
    "the service frequency means little waiting",
    "it suits the purpose of the journey",
];

impl MockBackend {
    fn with(behavior: Behavior) -> Self {
        Self { behavior, calls: AtomicUsize::new(0) }
    }

    /// Always returns `text`.
    pub fn fixed(text: impl Into<String>) -> Self {
        Self::with(Behavior::Fixed(text.into()))
    }

    /// Replays replies in order; once exhausted every call fails with 503.
    pub fn scripted(replies: impl IntoIterator<Item = MockReply>) -> Self {
        Self::with(Behavior::Scripted(Mutex::new(replies.into_iter().collect())))
    }

    /// Answers every agent with its ground-truth mode.
    pub fn echo(truths: HashMap<String, String>) -> Self {
        Self::with(Behavior::Echo(truths))
    }

    /// Pseudo-random but reproducible commuter. Accuracy depends on the
    /// model name, temperature and how many supplied examples share the
    /// agent's true choice, so experiment factors produce measurable effects.
    pub fn synthetic(truths: HashMap<String, String>, seed: u64) -> Self {
        Self::with(Behavior::Synthetic { truths, seed })
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

fn hash_words(parts: &[&[u8]]) -> [u64; 4] {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    let d = h.finalize();
    std::array::from_fn(|i| u64::from_le_bytes(d[i * 8..i * 8 + 8].try_into().unwrap()))
}

fn unit(x: u64) -> f64 {
    (x >> 11) as f64 / (1u64 << 53) as f64
}

fn synthetic_reply(request: &ChatRequest<'_>, truth: &str, seed: u64) -> String {
    let bundle = request.bundle;
    let modes = &bundle.available_modes;
    let model_skill = unit(hash_words(&[b"skill", request.model.as_bytes()])[0]);
    let words = hash_words(&[
        &seed.to_le_bytes(),
        request.model.as_bytes(),
        &request.params.temperature.to_bits().to_le_bytes(),
        request.agent_id.as_bytes(),
        bundle.system.as_bytes(),
        bundle.user_message().as_bytes(),
    ]);

    let agreeing = bundle.examples.iter().filter(|e| e.chosen_mode == truth).count();
    let example_share = if bundle.examples.is_empty() {
        0.0
    } else {
        agreeing as f64 / bundle.examples.len() as f64
    };
    let style_bonus = if bundle.style == PromptStyle::CotReact { 0.02 } else { 0.0 };
    let p_correct = (0.3 + 0.4 * model_skill + 0.25 * example_share + style_bonus
        - 0.05 * (request.params.temperature - 0.5))
        .clamp(0.05, 0.95);

    let choice = if unit(words[0]) < p_correct || modes.len() < 2 {
        truth.to_string()
    } else {
        let others: Vec<&String> = modes.iter().filter(|m| *m != truth).collect();
        others[(words[1] % others.len() as u64) as usize].clone()
    };
    let choice = if words[2] & 1 == 1 { choice.to_lowercase() } else { choice };

    match bundle.style {
        PromptStyle::Direct => json!({ "choice": choice }).to_string(),
        PromptStyle::CotReact => {
            let mut picked: Vec<&str> = REASONS
                .iter()
                .enumerate()
                .filter(|(i, _)| (words[3] >> i) & 1 == 1)
                .map(|(_, r)| *r)
                .collect();
            if picked.is_empty() {
                picked.push(REASONS[(words[3] % REASONS.len() as u64) as usize]);
            }
            let reasoning = format!("I would choose this because {}.", picked.join(", and "));
            let body = json!({ "reasoning": reasoning, "choice": choice }).to_string();
            if (words[2] >> 1) & 1 == 1 {
                format!("Let me think about the options first.\n```json\n{body}\n```")
            } else {
                body
            }
        }
    }
}

impl ChatBackend for MockBackend {
    fn complete(&self, request: &ChatRequest<'_>) -> Result<Completion, GatewayError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let reply = |text: String| Ok(Completion { text, attempts: 1, latency: Duration::ZERO });
        let missing = || GatewayError::Config(format!("mock has no ground truth for agent `{}`", request.agent_id));
        match &self.behavior {
            Behavior::Fixed(text) => reply(text.clone()),
            Behavior::Scripted(queue) => {
                let next = queue.lock().expect("mock queue poisoned").pop_front();
                match next {
                    Some(MockReply::Text(t)) => reply(t),
                    Some(MockReply::Status(status)) => Err(GatewayError::Status {
                        status,
                        attempts: 1,
                        body: String::new(),
                    }),
                    None => Err(GatewayError::Status { status: 503, attempts: 1, body: "script exhausted".into() }),
                }
            }
            Behavior::Echo(truths) => {
                let truth = truths.get(request.agent_id).ok_or_else(missing)?;
                reply(json!({ "choice": truth, "reasoning": "" }).to_string())
            }
            Behavior::Synthetic { truths, seed } => {
                let truth = truths.get(request.agent_id).ok_or_else(missing)?;
                reply(synthetic_reply(request, truth, *seed))
            }
        }
    }
}
