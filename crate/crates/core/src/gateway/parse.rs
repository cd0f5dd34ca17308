use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedDecision {
    pub choice: String,
    pub reasoning: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("response contains no JSON object")]
    NoObject,
    #[error("response object has no `choice` field")]
    MissingChoice,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("choice `{choice}` does not match any available mode")]
pub struct ChoiceError {
    pub choice: String,
}

/// Byte ranges of balanced `{...}` spans, outermost first, ignoring braces
/// inside string literals.
fn object_spans(raw: &str) -> Vec<(usize, usize)> {
    let bytes = raw.as_bytes();
    let mut spans = Vec::new();
    for start in (0..bytes.len()).filter(|&i| bytes[i] == b'{') {
        let mut depth = 0usize;
        let mut in_string = false;
        let mut escaped = false;
        for (off, &b) in bytes[start..].iter().enumerate() {
            if in_string {
                match b {
                    _ if escaped => escaped = false,
                    b'\\' => escaped = true,
                    b'"' => in_string = false,
                    _ => {}
                }
                continue;
            }
            match b {
                b'"' => in_string = true,
                b'{' => depth += 1,
                b'}' => {
                    depth -= 1;
                    if depth == 0 {
                        spans.push((start, start + off + 1));
                        break;
                    }
                }
                _ => {}
            }
        }
    }
    spans
}

fn scalar_text(v: &serde_json::Value) -> Option<String> {
    match v {
        serde_json::Value::String(s) => Some(s.clone()),
        serde_json::Value::Number(n) => Some(n.to_string()),
        serde_json::Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

/// Pulls the first JSON object carrying a `choice` out of free text. Code
/// fences, leading prose and reasoning traces are tolerated.
pub fn parse_response(raw: &str) -> Result<ParsedDecision, ParseError> {
    let mut saw_object = false;
    for (start, end) in object_spans(raw) {
        let Ok(serde_json::Value::Object(map)) = serde_json::from_str(&raw[start..end]) else {
            continue;
        };
        saw_object = true;
        let Some(choice) = map.get("choice").and_then(scalar_text) else {
            continue;
        };
        let reasoning = match map.get("reasoning") {
            None | Some(serde_json::Value::Null) => String::new(),
            Some(v) => scalar_text(v).unwrap_or_else(|| v.to_string()),
        };
        return Ok(ParsedDecision { choice, reasoning });
    }
    Err(if saw_object { ParseError::MissingChoice } else { ParseError::NoObject })
}

/// Case-insensitive aliases mapped to canonical mode labels.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "BTreeMap<String, String>", into = "BTreeMap<String, String>")]
pub struct AliasTable(BTreeMap<String, String>);

impl AliasTable {
    pub fn resolve<'a>(&'a self, raw: &'a str) -> &'a str {
        self.0.get(&raw.trim().to_lowercase()).map(String::as_str).unwrap_or(raw)
    }
}

impl From<BTreeMap<String, String>> for AliasTable {
    fn from(map: BTreeMap<String, String>) -> Self {
        Self(
            map.into_iter()
                .map(|(k, v)| (k.trim().to_lowercase(), crate::dataset::canonical_mode(&v)))
                .collect(),
        )
    }
}

impl From<AliasTable> for BTreeMap<String, String> {
    fn from(t: AliasTable) -> Self {
        t.0
    }
}

impl<const N: usize> From<[(&str, &str); N]> for AliasTable {
    fn from(pairs: [(&str, &str); N]) -> Self {
        pairs
            .into_iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect::<BTreeMap<_, _>>()
            .into()
    }
}

pub fn extract_choice(
    parsed: &ParsedDecision,
    available_modes: &[String],
    aliases: &AliasTable,
) -> Result<String, ChoiceError> {
    let candidate = aliases.resolve(&parsed.choice).trim().to_lowercase();
    available_modes
        .iter()
        .find(|m| m.to_lowercase() == candidate)
        .cloned()
        .ok_or_else(|| ChoiceError { choice: parsed.choice.clone() })
}
