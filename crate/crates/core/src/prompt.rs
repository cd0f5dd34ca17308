//! Narrative rendering of survey instances and prompt assembly.
//!
//! All wording lives in a [`PromptTemplate`]. Template fields may contain
//! `{{name}}` placeholders; the names each field accepts are listed on the
//! field. The template hash is part of every experiment fingerprint, so any
//! wording change starts a fresh set of records.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset::{AttributeGroup, AttributeSchema, ChoiceInstance, Value};

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("template field `{field}`: unknown placeholder `{{{{{name}}}}}`")]
    UnknownPlaceholder { field: String, name: String },
    #[error("template field `{field}`: unterminated placeholder")]
    Unterminated { field: String },
    #[error("expected 0 or {k} examples, got {got}")]
    ExampleCount { k: usize, got: usize },
    #[error("cannot read template: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse template: {0}")]
    Parse(#[from] toml::de::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptStyle {
    Direct,
    CotReact,
}

impl PromptStyle {
    pub const ALL: [PromptStyle; 2] = [PromptStyle::Direct, PromptStyle::CotReact];

    pub fn as_str(&self) -> &'static str {
        match self {
            PromptStyle::Direct => "direct",
            PromptStyle::CotReact => "cot_react",
        }
    }

    /// Fields the model is asked to return.
    pub fn output_fields(&self) -> Vec<String> {
        match self {
            PromptStyle::Direct => vec!["choice".into()],
            PromptStyle::CotReact => vec!["reasoning".into(), "choice".into()],
        }
    }
}

impl std::fmt::Display for PromptStyle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Versioned prompt wording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptTemplate {
    pub version: String,
    /// System text for the reasoning style. Placeholders: `modes`, `format`.
    pub system_cot_react: String,
    /// System text for the direct style. Placeholders: `modes`, `format`.
    pub system_direct: String,
    /// Opens the block of worked examples.
    pub examples_intro: String,
    /// Heading of one example. Placeholder: `index` (1-based).
    pub example_header: String,
    /// Introduces the commuter the model decides for.
    pub subject_intro: String,
    pub heading_profile: String,
    pub heading_trip: String,
    pub heading_additional: String,
    pub heading_options: String,
    /// Answer line of an example. Placeholder: `mode`.
    pub chosen_line: String,
    pub missing_value: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self {
            version: "v1".into(),
            system_cot_react: "You are a synthetic commuter. Adopt the traveller profile described by the user \
                and decide which transport mode you would choose for the trip described.\n\
                Think through the relevant trade-offs and contextual factors, such as time, cost, and purpose, \
                and write down your rationale before stating your selected mode.\n\
                The permissible answers are: {{modes}}.\n\
                Reply with a single JSON object of the form {{format}} and nothing else."
                .into(),
            system_direct: "You are a synthetic commuter. Adopt the traveller profile described by the user \
                and decide which transport mode you would choose for the trip described.\n\
                Output only the selected mode, without any explanation.\n\
                The permissible answers are: {{modes}}.\n\
                Reply with a single JSON object of the form {{format}} and nothing else."
                .into(),
            examples_intro: "Here are decisions made by other commuters:".into(),
            example_header: "Example {{index}}:".into(),
            subject_intro: "Now decide for this commuter:".into(),
            heading_profile: "Traveller profile:".into(),
            heading_trip: "Trip context:".into(),
            heading_additional: "Additional information:".into(),
            heading_options: "Available options:".into(),
            chosen_line: "Chosen mode: {{mode}}".into(),
            missing_value: "not reported".into(),
        }
    }
}

impl PromptTemplate {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, PromptError> {
        let text = std::fs::read_to_string(path)?;
        let t: PromptTemplate = toml::from_str(&text)?;
        t.validate()?;
        Ok(t)
    }

    /// Rejects placeholders a field does not accept.
    pub fn validate(&self) -> Result<(), PromptError> {
        let none: &[&str] = &[];
        let checks: [(&str, &str, &[&str]); 11] = [
            ("system_cot_react", &self.system_cot_react, &["modes", "format"]),
            ("system_direct", &self.system_direct, &["modes", "format"]),
            ("examples_intro", &self.examples_intro, none),
            ("example_header", &self.example_header, &["index"]),
            ("subject_intro", &self.subject_intro, none),
            ("heading_profile", &self.heading_profile, none),
            ("heading_trip", &self.heading_trip, none),
            ("heading_additional", &self.heading_additional, none),
            ("heading_options", &self.heading_options, none),
            ("chosen_line", &self.chosen_line, &["mode"]),
            ("missing_value", &self.missing_value, none),
        ];
        for (field, text, allowed) in checks {
            let vars: Vec<(&str, &str)> = allowed.iter().map(|n| (*n, "")).collect();
            fill(field, text, &vars)?;
        }
        Ok(())
    }

    /// Hex SHA-256 of the template's canonical serialization.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("template serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    /// The answer line as it appears after an example, e.g. `Chosen mode: CAR`.
    pub fn answer_line(&self, mode: &str) -> String {
        fill("chosen_line", &self.chosen_line, &[("mode", mode)]).expect("validated template")
    }
}

/// Substitutes `{{name}}` placeholders.
pub fn fill(field: &str, text: &str, vars: &[(&str, &str)]) -> Result<String, PromptError> {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let end = after.find("}}").ok_or_else(|| PromptError::Unterminated { field: field.into() })?;
        let name = after[..end].trim();
        let value = vars
            .iter()
            .find(|(k, _)| *k == name)
            .map(|(_, v)| *v)
            .ok_or_else(|| PromptError::UnknownPlaceholder { field: field.into(), name: name.into() })?;
        out.push_str(value);
        rest = &after[end + 2..];
    }
    out.push_str(rest);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderedExample {
    pub id: String,
    pub text: String,
    pub chosen_mode: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: "system".into(), content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: "user".into(), content: content.into() }
    }
}

/// A fully assembled prompt for one synthetic commuter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system: String,
    pub examples: Vec<RenderedExample>,
    pub subject: String,
    pub style: PromptStyle,
    pub expected_output_schema: Vec<String>,
    pub available_modes: Vec<String>,
    pub template_hash: String,
    user: String,
}

impl PromptBundle {
    /// Text of the user turn: examples (if any) followed by the subject.
    pub fn user_message(&self) -> &str {
        &self.user
    }

    pub fn messages(&self) -> Vec<ChatMessage> {
        vec![ChatMessage::system(&self.system), ChatMessage::user(&self.user)]
    }
}

/// Renders and assembles prompts for one dataset.
#[derive(Debug, Clone)]
pub struct PromptForge<'a> {
    schema: &'a AttributeSchema,
    template: &'a PromptTemplate,
    k: usize,
    template_hash: String,
}

fn format_number(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        let s = format!("{v:.2}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

impl<'a> PromptForge<'a> {
    pub fn new(schema: &'a AttributeSchema, template: &'a PromptTemplate, k: usize) -> Self {
        Self { schema, template, k, template_hash: template.hash() }
    }

    pub fn template_hash(&self) -> &str {
        &self.template_hash
    }

    pub fn template(&self) -> &PromptTemplate {
        self.template
    }

    fn format_value(&self, d: &ChoiceInstance, name: &str) -> String {
        let attr = self.schema.attribute(name).expect("attribute from schema");
        match d.value(name) {
            Value::Missing => self.template.missing_value.clone(),
            Value::Level(i) => attr.levels[i].clone(),
            Value::Number(v) if attr.unit.is_empty() => format_number(v),
            Value::Number(v) => format!("{} {}", format_number(v), attr.unit),
        }
    }

    /// Deterministic narrative of one instance. Attributes tied to an
    /// alternative are listed inside that alternative's option block and
    /// omitted when it is unavailable.
    pub fn render_instance(&self, d: &ChoiceInstance, include_choice: bool) -> String {
        let mut out = String::new();
        let sections = [
            (&self.template.heading_profile, &[AttributeGroup::Socio][..]),
            (&self.template.heading_trip, &[AttributeGroup::TripCat, AttributeGroup::TripNum][..]),
            (&self.template.heading_additional, &[AttributeGroup::Additional][..]),
        ];
        for (heading, groups) in sections {
            let lines: Vec<String> = self
                .schema
                .attributes
                .iter()
                .filter(|a| a.alternative.is_none() && groups.contains(&a.group))
                .map(|a| format!("- {}: {}", a.display_label(), self.format_value(d, &a.name)))
                .collect();
            if lines.is_empty() {
                continue;
            }
            let _ = writeln!(out, "{heading}");
            for l in lines {
                let _ = writeln!(out, "{l}");
            }
        }

        let _ = writeln!(out, "{}", self.template.heading_options);
        for mode in &d.available_modes {
            let _ = writeln!(out, "{mode}:");
            for a in self.schema.attributes.iter().filter(|a| a.alternative.as_deref() == Some(mode)) {
                let _ = writeln!(out, "  - {}: {}", a.display_label(), self.format_value(d, &a.name));
            }
        }
        if include_choice {
            let _ = writeln!(out, "{}", self.template.answer_line(&d.chosen_mode));
        }
        out
    }

    fn system_text(&self, style: PromptStyle, modes: &[String]) -> String {
        let choice = format!("<one of {}>", modes.join(", "));
        let format = match style {
            PromptStyle::CotReact => format!(r#"{{"reasoning": "<your rationale>", "choice": "{choice}"}}"#),
            PromptStyle::Direct => format!(r#"{{"choice": "{choice}"}}"#),
        };
        let (field, text) = match style {
            PromptStyle::CotReact => ("system_cot_react", &self.template.system_cot_react),
            PromptStyle::Direct => ("system_direct", &self.template.system_direct),
        };
        fill(field, text, &[("modes", &modes.join(", ")), ("format", &format)]).expect("validated template")
    }

    pub fn assemble(
        &self,
        subject: &ChoiceInstance,
        examples: &[&ChoiceInstance],
        style: PromptStyle,
    ) -> Result<PromptBundle, PromptError> {
        if !examples.is_empty() && examples.len() != self.k {
            return Err(PromptError::ExampleCount { k: self.k, got: examples.len() });
        }
        let rendered: Vec<RenderedExample> = examples
            .iter()
            .map(|e| RenderedExample {
                id: e.id.clone(),
                text: self.render_instance(e, true),
                chosen_mode: e.chosen_mode.clone(),
            })
            .collect();
        let subject_text = self.render_instance(subject, false);

        let mut user = String::new();
        if !rendered.is_empty() {
            let _ = writeln!(user, "{}\n", self.template.examples_intro);
            for (i, ex) in rendered.iter().enumerate() {
                let idx = (i + 1).to_string();
                let header = fill("example_header", &self.template.example_header, &[("index", &idx)])
                    .expect("validated template");
                let _ = writeln!(user, "{header}\n{}", ex.text);
            }
        }
        let _ = write!(user, "{}\n{subject_text}", self.template.subject_intro);

        Ok(PromptBundle {
            system: self.system_text(style, &subject.available_modes),
            examples: rendered,
            subject: subject_text,
            style,
            expected_output_schema: style.output_fields(),
            available_modes: subject.available_modes.clone(),
            template_hash: self.template_hash.clone(),
            user,
        })
    }
}
