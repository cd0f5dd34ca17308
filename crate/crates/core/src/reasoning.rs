//! Explanation Strength Index: the share of a factor lexicon a rationale
//! mentions, plus per-configuration aggregates.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompt::PromptStyle;

pub const DEFAULT_FACTORS: [&str; 5] = ["time", "cost", "comfort", "convenience", "frequency"];

#[derive(Debug, Error, PartialEq)]
pub enum LexiconError {
    #[error("factor lexicon is empty")]
    Empty,
    #[error("factor `{0}` is blank or not lower-case")]
    NotLowercase(String),
    #[error("factor `{0}` is listed twice")]
    Duplicate(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct FactorLexicon(Vec<String>);

impl FactorLexicon {
    pub fn new<S: Into<String>>(factors: impl IntoIterator<Item = S>) -> Result<Self, LexiconError> {
        let factors: Vec<String> = factors.into_iter().map(Into::into).collect();
        if factors.is_empty() {
            return Err(LexiconError::Empty);
        }
        for (i, f) in factors.iter().enumerate() {
            if f.trim().is_empty() || *f != f.to_lowercase() {
                return Err(LexiconError::NotLowercase(f.clone()));
            }
            if factors[..i].contains(f) {
                return Err(LexiconError::Duplicate(f.clone()));
            }
        }
        Ok(Self(factors))
    }

    pub fn factors(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Default for FactorLexicon {
    fn default() -> Self {
        Self::new(DEFAULT_FACTORS).expect("default lexicon is valid")
    }
}

impl TryFrom<Vec<String>> for FactorLexicon {
    type Error = LexiconError;
    fn try_from(v: Vec<String>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<FactorLexicon> for Vec<String> {
    fn from(l: FactorLexicon) -> Self {
        l.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EsiScore {
    pub value: f64,
    /// Matched factors in lexicon order.
    pub hits: Vec<String>,
}

fn contains_token(text: &str, factor: &str) -> bool {
    text.match_indices(factor).any(|(start, m)| {
        let before = text[..start].chars().next_back();
        let after = text[start + m.len()..].chars().next();
        !before.is_some_and(char::is_alphanumeric) && !after.is_some_and(char::is_alphanumeric)
    })
}

/// Scores `reasoning` by lower-case substring containment, or by whole-token
/// containment when `token_boundaries` is set.
pub fn esi(reasoning: &str, lexicon: &FactorLexicon, token_boundaries: bool) -> EsiScore {
    let text = reasoning.to_lowercase();
    let hits: Vec<String> = lexicon
        .factors()
        .iter()
        .filter(|f| {
            if token_boundaries {
                contains_token(&text, f)
            } else {
                text.contains(f.as_str())
            }
        })
        .cloned()
        .collect();
    EsiScore { value: hits.len() as f64 / lexicon.len() as f64, hits }
}

/// One experiment configuration, ignoring the dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EsiGroupKey {
    pub model: String,
    pub shot: String,
    pub style: PromptStyle,
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EsiSummary {
    pub model: String,
    pub shot: String,
    pub style: PromptStyle,
    pub temperature: f64,
    pub count: usize,
    pub mean: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    /// Direct-style prompts request no rationale, so their scores are 0 by
    /// construction.
    pub direct_style: bool,
}

/// Linear-interpolation quantile of sorted data.
pub(crate) fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Mean and spread of ESI values per group, in input order. Empty groups
/// are skipped with a warning.
pub fn esi_aggregate(groups: impl IntoIterator<Item = (EsiGroupKey, Vec<f64>)>) -> Vec<EsiSummary> {
    groups
        .into_iter()
        .filter_map(|(key, mut values)| {
            if values.is_empty() {
                log::warn!(
                    "skipping empty ESI group {} / {} / {} / {}",
                    key.model,
                    key.shot,
                    key.style,
                    key.temperature
                );
                return None;
            }
            values.sort_by(f64::total_cmp);
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            let q1 = quantile(&values, 0.25);
            let q3 = quantile(&values, 0.75);
            Some(EsiSummary {
                direct_style: key.style == PromptStyle::Direct,
                model: key.model,
                shot: key.shot,
                style: key.style,
                temperature: key.temperature,
                count: values.len(),
                mean,
                q1,
                q3,
                iqr: q3 - q1,
            })
        })
        .collect()
}

pub fn write_esi_table<W: Write>(out: W, rows: &[EsiSummary]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
