//! The extraction record shared by both pipelines.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::llm::ParseStatus;
use crate::rule_extract::{AgeValue, Sex};

/// Which pipeline produced an [`Extraction`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    Rule,
    Llm { model: String },
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Rule => f.write_str("rule"),
            Method::Llm { model } => write!(f, "llm:{model}"),
        }
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            None if s == "rule" => Ok(Method::Rule),
            Some(("llm", model)) => Ok(Method::Llm {
                model: model.to_string(),
            }),
            _ => Err(format!("unknown method provenance `{s}`")),
        }
    }
}

impl TryFrom<String> for Method {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> Self {
        m.to_string()
    }
}

/// Stable machine-readable diagnostic codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticCode {
    EmptyText,
    /// No age expression in the first six tokens of the first sentence.
    AgeWindowMiss,
    /// An age expression matched but exceeded the configured bound.
    AgeOutOfRange,
    SexNoCue,
    /// Cues of both genders occur in the first sentence.
    SexAmbiguous,
    /// More than one lexicon stem occurs in the document.
    LesionMultiple,
    LlmPartial,
    LlmUnparseable,
    /// The model returned an age that the age grammar cannot read.
    LlmAgeUnparsed,
    LlmSexUnrecognized,
}

impl DiagnosticCode {
    pub fn as_str(self) -> &'static str {
        match self {
            DiagnosticCode::EmptyText => "empty_text",
            DiagnosticCode::AgeWindowMiss => "age_window_miss",
            DiagnosticCode::AgeOutOfRange => "age_out_of_range",
            DiagnosticCode::SexNoCue => "sex_no_cue",
            DiagnosticCode::SexAmbiguous => "sex_ambiguous",
            DiagnosticCode::LesionMultiple => "lesion_multiple",
            DiagnosticCode::LlmPartial => "llm_partial",
            DiagnosticCode::LlmUnparseable => "llm_unparseable",
            DiagnosticCode::LlmAgeUnparsed => "llm_age_unparsed",
            DiagnosticCode::LlmSexUnrecognized => "llm_sex_unrecognized",
        }
    }
}

impl fmt::Display for DiagnosticCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub record_id: String,
    pub code: DiagnosticCode,
    pub detail: String,
}

impl Diagnostic {
    pub fn new(record_id: &str, code: DiagnosticCode, detail: impl Into<String>) -> Self {
        Self {
            record_id: record_id.to_string(),
            code,
            detail: detail.into(),
        }
    }
}

/// The four extracted fields for one record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Extraction {
    pub id: String,
    pub method: Method,
    pub age: Option<AgeValue>,
    pub sex: Option<Sex>,
    pub lesion: Option<String>,
    /// Drug names in order of first mention, without duplicates.
    pub drugs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parse_status: Option<ParseStatus>,
    #[serde(default)]
    pub diagnostics: Vec<Diagnostic>,
}

impl Extraction {
    pub fn empty(id: &str, method: Method) -> Self {
        Self {
            id: id.to_string(),
            method,
            age: None,
            sex: None,
            lesion: None,
            drugs: Vec::new(),
            parse_status: None,
            diagnostics: Vec::new(),
        }
    }

    pub fn has_diagnostic(&self, code: DiagnosticCode) -> bool {
        self.diagnostics.iter().any(|d| d.code == code)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_round_trip() {
        for m in [
            Method::Rule,
            Method::Llm {
                model: "llama:8b".into(),
            },
        ] {
            assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
        }
        assert!("gpt".parse::<Method>().is_err());
    }

    #[test]
    fn json_shape() {
        let mut e = Extraction::empty("r1", Method::Rule);
        e.age = Some(AgeValue::new(5, 4).unwrap());
        e.sex = Some(Sex::F);
        e.diagnostics
            .push(Diagnostic::new("r1", DiagnosticCode::SexAmbiguous, "x"));
        let json = serde_json::to_string(&e).unwrap();
        assert_eq!(
            json,
            r#"{"id":"r1","method":"rule","age":{"years":5,"months":4},"sex":"F","lesion":null,"drugs":[],"diagnostics":[{"record_id":"r1","code":"sex_ambiguous","detail":"x"}]}"#
        );
        assert_eq!(serde_json::from_str::<Extraction>(&json).unwrap(), e);
    }
}
