//! The LLM pipeline.
//!
//! A record is sent to a chat-completion endpoint together with a prompt
//! asking for a single `⟨key=value | ...⟩` line. The answer is parsed
//! leniently, and the values are converted with the same age grammar the
//! rule pipeline uses. The same client also translates records.

mod client;
pub mod mock;
mod parse;
mod prompt;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use client::{ChatRequest, ChatResponse, HttpChatClient, LlmEndpointConfig};
pub use parse::{format_llm_output, parse_llm_output, ParseStatus, ParsedLlmOutput};
pub use prompt::{
    build_prompt, build_translation_prompt, PromptSpec, PromptTemplate,
    DEFAULT_EXTRACTION_TEMPLATE, DEFAULT_TRANSLATION_TEMPLATE,
};

use crate::corpus::{EpicrisisRecord, Language};
use crate::drug_match::normalize_drug_name;
use crate::extraction::{Diagnostic, DiagnosticCode, Extraction, Method};
use crate::rule_extract::{parse_age_expression, Sex};
use crate::textproc::tokenize;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("request failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("endpoint returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed completion response: {0}")]
    BadResponse(String),
    #[error("invalid endpoint configuration: {0}")]
    Config(String),
    #[error("prompt template: {0}")]
    Template(String),
    #[error("record `{0}` is not Polish")]
    NotPolish(String),
    #[error("empty translation for record `{0}`")]
    EmptyTranslation(String),
}

/// The fields requested from the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKey {
    Age,
    Sex,
    Drugs,
    SkinChanges,
}

impl TaskKey {
    pub const ALL: [TaskKey; 4] = [
        TaskKey::Age,
        TaskKey::Sex,
        TaskKey::Drugs,
        TaskKey::SkinChanges,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKey::Age => "age",
            TaskKey::Sex => "sex",
            TaskKey::Drugs => "drugs",
            TaskKey::SkinChanges => "skin_changes",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            TaskKey::Age => {
                "the patient's age in years, optionally followed by months as a fraction of 12 (for example 5 or 5 i 4/12)"
            }
            TaskKey::Sex => "M or F",
            TaskKey::Drugs => "names of the drugs mentioned, separated by commas",
            TaskKey::SkinChanges => "the skin change described in the text",
        }
    }

    /// Case-insensitive key lookup with a few common aliases.
    pub fn from_label(label: &str) -> Option<Self> {
        let norm: String = label
            .trim()
            .to_lowercase()
            .chars()
            .map(|c| if c == ' ' || c == '-' { '_' } else { c })
            .collect();
        match norm.as_str() {
            "age" => Some(TaskKey::Age),
            "sex" | "gender" => Some(TaskKey::Sex),
            "drugs" | "drug" | "drugs_mentioned" | "medications" => Some(TaskKey::Drugs),
            "skin_changes" | "skin_change" | "skin_lesions" | "skin_lesion" => {
                Some(TaskKey::SkinChanges)
            }
            _ => None,
        }
    }
}

impl fmt::Display for TaskKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }
}

/// Anything that can answer a chat-completion request.
pub trait ChatBackend: Send + Sync {
    fn model(&self) -> &str;

    fn complete(&self, messages: &[ChatMessage]) -> Result<String, LlmError>;
}

/// Map free-form sex answers (English or Polish) onto `M`/`F`.
pub fn normalize_sex(value: &str) -> Option<Sex> {
    match value.trim().trim_end_matches('.').to_lowercase().as_str() {
        "m" | "male" | "man" | "boy" | "masculine" | "mężczyzna" | "chłopiec" | "męska"
        | "męski" => Some(Sex::M),
        "f" | "k" | "female" | "woman" | "girl" | "feminine" | "kobieta" | "dziewczynka"
        | "żeńska" | "żeński" => Some(Sex::F),
        _ => None,
    }
}

/// Comma-separated drug list, normalized and deduplicated in order.
pub fn split_drugs(value: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for name in value.split(',').map(normalize_drug_name) {
        if !name.is_empty() && name != "none" && !out.contains(&name) {
            out.push(name);
        }
    }
    out
}

/// Convert a parsed answer into an [`Extraction`].
pub fn to_extraction(
    record_id: &str,
    model: &str,
    parsed: &ParsedLlmOutput,
    expected: &[TaskKey],
) -> Extraction {
    let mut out = Extraction::empty(
        record_id,
        Method::Llm {
            model: model.to_string(),
        },
    );
    out.parse_status = Some(parsed.status);
    match parsed.status {
        ParseStatus::Unparseable => {
            let snippet: String = parsed.raw.chars().take(200).collect();
            out.diagnostics.push(Diagnostic::new(
                record_id,
                DiagnosticCode::LlmUnparseable,
                format!("no requested key in response: {snippet}"),
            ));
            return out;
        }
        ParseStatus::Partial => {
            let missing: Vec<&str> = parsed
                .missing(expected)
                .iter()
                .map(|k| k.as_str())
                .collect();
            out.diagnostics.push(Diagnostic::new(
                record_id,
                DiagnosticCode::LlmPartial,
                format!("missing keys: {}", missing.join(", ")),
            ));
        }
        ParseStatus::Ok => {}
    }
    if let Some(age) = parsed.get(TaskKey::Age) {
        out.age = parse_age_expression(&tokenize(age));
        if out.age.is_none() {
            out.diagnostics.push(Diagnostic::new(
                record_id,
                DiagnosticCode::LlmAgeUnparsed,
                format!("age `{age}` does not match the age grammar"),
            ));
        }
    }
    if let Some(sex) = parsed.get(TaskKey::Sex) {
        out.sex = normalize_sex(sex);
        if out.sex.is_none() {
            out.diagnostics.push(Diagnostic::new(
                record_id,
                DiagnosticCode::LlmSexUnrecognized,
                format!("sex `{sex}` is not recognized"),
            ));
        }
    }
    if let Some(drugs) = parsed.get(TaskKey::Drugs) {
        out.drugs = split_drugs(drugs);
    }
    out.lesion = parsed.get(TaskKey::SkinChanges).map(str::to_string);
    out
}

/// One completion request for `record`, parsed into an [`Extraction`].
pub fn extract_via_llm(
    record: &EpicrisisRecord,
    spec: &PromptSpec,
    backend: &dyn ChatBackend,
) -> Result<Extraction, LlmError> {
    let response = backend.complete(&build_prompt(record, spec))?;
    let parsed = parse_llm_output(&response, &spec.keys);
    Ok(to_extraction(
        &record.id,
        backend.model(),
        &parsed,
        &spec.keys,
    ))
}

/// Translate a Polish record; the copy gets an `-en` id suffix.
pub fn translate_record(
    record: &EpicrisisRecord,
    template: &PromptTemplate,
    backend: &dyn ChatBackend,
) -> Result<EpicrisisRecord, LlmError> {
    if record.language != Language::Pl {
        return Err(LlmError::NotPolish(record.id.clone()));
    }
    let text = backend.complete(&build_translation_prompt(record, template))?;
    let text = text.trim();
    if text.is_empty() {
        return Err(LlmError::EmptyTranslation(record.id.clone()));
    }
    Ok(EpicrisisRecord {
        id: format!("{}-en", record.id),
        language: Language::En,
        text: text.to_string(),
        ..record.clone()
    })
}
