use std::collections::BTreeMap;
use std::path::Path;

use super::parse::format_llm_output;
use super::{ChatMessage, LlmError, TaskKey};
use crate::corpus::EpicrisisRecord;

pub const DEFAULT_EXTRACTION_TEMPLATE: &str = include_str!("../../data/prompts/extraction.txt");
pub const DEFAULT_TRANSLATION_TEMPLATE: &str = include_str!("../../data/prompts/translation.txt");

const SYSTEM_MARKER: &str = "[system]";
const USER_MARKER: &str = "[user]";

/// A two-part chat template with `{{name}}` placeholders.
///
/// The file starts with a `[system]` line; a later `[user]` line begins the
/// user message. Everything between markers is kept verbatim, minus the
/// final newline of each section.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub system: String,
    pub user: String,
}

impl PromptTemplate {
    pub fn parse(text: &str) -> Result<Self, LlmError> {
        let mut system: Option<Vec<&str>> = None;
        let mut user: Option<Vec<&str>> = None;
        for line in text.lines() {
            match line.trim_end() {
                SYSTEM_MARKER if system.is_none() && user.is_none() => system = Some(Vec::new()),
                USER_MARKER if system.is_some() && user.is_none() => user = Some(Vec::new()),
                _ => match (&mut system, &mut user) {
                    (_, Some(u)) => u.push(line),
                    (Some(s), None) => s.push(line),
                    (None, None) if line.trim().is_empty() => {}
                    (None, None) => {
                        return Err(LlmError::Template(format!(
                            "template must start with a `{SYSTEM_MARKER}` line"
                        )))
                    }
                },
            }
        }
        match (system, user) {
            (Some(s), Some(u)) => Ok(Self {
                system: s.join("\n"),
                user: u.join("\n"),
            }),
            _ => Err(LlmError::Template(format!(
                "template needs `{SYSTEM_MARKER}` and `{USER_MARKER}` sections"
            ))),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::Template(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn extraction() -> Self {
        Self::parse(DEFAULT_EXTRACTION_TEMPLATE).expect("bundled template is valid")
    }

    pub fn translation() -> Self {
        Self::parse(DEFAULT_TRANSLATION_TEMPLATE).expect("bundled template is valid")
    }

    pub fn render(&self, vars: &BTreeMap<&str, &str>) -> Vec<ChatMessage> {
        vec![
            ChatMessage::system(render(&self.system, vars)),
            ChatMessage::user(render(&self.user, vars)),
        ]
    }
}

/// Single-pass substitution: text inserted for one placeholder is never
/// scanned for further placeholders. Unknown placeholders are left as is.
fn render(template: &str, vars: &BTreeMap<&str, &str>) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        match after.find("}}") {
            Some(end) if vars.contains_key(after[..end].trim()) => {
                out.push_str(vars[after[..end].trim()]);
                rest = &after[end + 2..];
            }
            _ => {
                out.push_str("{{");
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

/// Extraction prompt configuration.
#[derive(Debug, Clone)]
pub struct PromptSpec {
    pub template: PromptTemplate,
    pub keys: Vec<TaskKey>,
    /// Example answer value per key, shown to the model.
    pub example: BTreeMap<TaskKey, Option<String>>,
}

impl Default for PromptSpec {
    fn default() -> Self {
        let example = [
            (TaskKey::Age, Some("5 i 4/12")),
            (TaskKey::Sex, Some("F")),
            (TaskKey::Drugs, Some("Zyrtec, Claritine")),
            (TaskKey::SkinChanges, None),
        ]
        .into_iter()
        .map(|(k, v)| (k, v.map(str::to_string)))
        .collect();
        Self {
            template: PromptTemplate::extraction(),
            keys: TaskKey::ALL.to_vec(),
            example,
        }
    }
}

impl PromptSpec {
    pub fn with_keys(mut self, keys: &[TaskKey]) -> Self {
        self.keys = keys.to_vec();
        self
    }

    /// The example answer restricted to the requested keys.
    pub fn example_output(&self) -> String {
        let fields: Vec<(TaskKey, Option<String>)> = self
            .keys
            .iter()
            .map(|k| (*k, self.example.get(k).cloned().flatten()))
            .collect();
        format_llm_output(&fields)
    }
}

/// System and user messages for one record. The record text is passed
/// through unescaped.
pub fn build_prompt(record: &EpicrisisRecord, spec: &PromptSpec) -> Vec<ChatMessage> {
    let keys = spec
        .keys
        .iter()
        .map(|k| format!("- {}: {}", k.as_str(), k.description()))
        .collect::<Vec<_>>()
        .join("\n");
    let example = spec.example_output();
    let vars = BTreeMap::from([
        ("keys", keys.as_str()),
        ("example", example.as_str()),
        ("context", record.text.as_str()),
    ]);
    spec.template.render(&vars)
}

pub fn build_translation_prompt(
    record: &EpicrisisRecord,
    template: &PromptTemplate,
) -> Vec<ChatMessage> {
    template.render(&BTreeMap::from([("context", record.text.as_str())]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Language;
    use crate::llm::{parse_llm_output, ParseStatus, Role};
    use sha2::{Digest, Sha256};

    fn record(text: &str) -> EpicrisisRecord {
        EpicrisisRecord {
            id: "r1".into(),
            doctor: "1".into(),
            icd10: None,
            language: Language::Pl,
            text: text.into(),
            gold: None,
        }
    }

    fn sha256(s: &str) -> String {
        format!("{:x}", Sha256::digest(s.as_bytes()))
    }

    #[test]
    fn bundled_templates_are_pinned() {
        assert_eq!(
            sha256(DEFAULT_EXTRACTION_TEMPLATE),
            "0fcb2cd5182c2ed0fe037a54adb92bcd05cb75d8f77378ddaf7e8e2e5e76b7fc"
        );
        assert_eq!(
            sha256(DEFAULT_TRANSLATION_TEMPLATE),
            "1cad00a091850e381c2638abf54e48d789eab4f34bafe7e38be6731c910444ec"
        );
    }

    #[test]
    fn default_prompt_structure() {
        let msgs = build_prompt(&record("Pacjentka lat 5."), &PromptSpec::default());
        assert_eq!(msgs.len(), 2);
        assert_eq!(msgs[0].role, Role::System);
        let system = &msgs[0].content;
        assert!(system.contains("healthcare assistant"));
        assert!(system.contains("The answer should be given only based on the context given"));
        assert!(
            system.contains("⟨age=5 i 4/12 | sex=F | drugs=Zyrtec, Claritine | skin_changes=None⟩")
        );
        assert!(system.contains("key=None"));
        for key in ["age", "sex", "drugs", "skin_changes"] {
            assert!(system.contains(&format!("- {key}:")));
        }
        assert_eq!(msgs[1].role, Role::User);
        assert_eq!(msgs[1].content, "Pacjentka lat 5.");
    }

    #[test]
    fn single_key_projection() {
        let spec = PromptSpec::default().with_keys(&[TaskKey::Age]);
        assert_eq!(spec.example_output(), "⟨age=5 i 4/12⟩");
        let system = &build_prompt(&record("x"), &spec)[0].content;
        assert!(!system.contains("- sex:"));
    }

    #[test]
    fn pipes_in_record_text_pass_through() {
        let text = "Leki: Zyrtec | Claritine. {{keys}} zostaje.";
        let msgs = build_prompt(&record(text), &PromptSpec::default());
        assert_eq!(msgs[1].content, text);
        let parsed = parse_llm_output(&msgs[1].content, &TaskKey::ALL);
        assert_eq!(parsed.status, ParseStatus::Unparseable);
        assert_eq!(parsed.raw, text);
    }

    #[test]
    fn template_parsing() {
        let t =
            PromptTemplate::parse("[system]\nA {{x}}\n[user]\n{{context}} {{missing}}\n").unwrap();
        assert_eq!(t.system, "A {{x}}");
        let msgs = t.render(&BTreeMap::from([("x", "{{context}}"), ("context", "C")]));
        assert_eq!(msgs[0].content, "A {{context}}");
        assert_eq!(msgs[1].content, "C {{missing}}");
        assert!(PromptTemplate::parse("no markers").is_err());
        assert!(PromptTemplate::parse("[system]\nonly system").is_err());
        assert_eq!(PromptTemplate::translation().system.lines().count(), 3);
    }
}
