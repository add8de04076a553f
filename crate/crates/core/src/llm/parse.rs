use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::TaskKey;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParseStatus {
    /// Every requested key was present, possibly as `None`.
    Ok,
    Partial,
    /// No requested key could be found.
    Unparseable,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedLlmOutput {
    /// Keys that were found; `None` values mean the model answered `key=None`.
    pub values: BTreeMap<TaskKey, Option<String>>,
    pub status: ParseStatus,
    pub raw: String,
}

impl ParsedLlmOutput {
    pub fn get(&self, key: TaskKey) -> Option<&str> {
        self.values.get(&key).and_then(|v| v.as_deref())
    }

    pub fn missing(&self, expected: &[TaskKey]) -> Vec<TaskKey> {
        expected
            .iter()
            .filter(|k| !self.values.contains_key(k))
            .copied()
            .collect()
    }
}

/// Render `⟨key=value | ...⟩`, writing absent values as `None`.
pub fn format_llm_output(fields: &[(TaskKey, Option<String>)]) -> String {
    let body = fields
        .iter()
        .map(|(k, v)| format!("{}={}", k.as_str(), v.as_deref().unwrap_or("None")))
        .collect::<Vec<_>>()
        .join(" | ");
    format!("⟨{body}⟩")
}

/// Contents of the last bracketed block; ASCII and typographic angle
/// brackets are both accepted.
fn last_block(text: &str) -> Option<&str> {
    let mut open = None;
    let mut last = None;
    for (i, c) in text.char_indices() {
        match c {
            '⟨' | '<' => open = Some(i + c.len_utf8()),
            '⟩' | '>' => {
                if let Some(start) = open.take() {
                    last = Some(&text[start..i]);
                }
            }
            _ => {}
        }
    }
    last
}

fn clean_value(v: &str) -> Option<String> {
    let v = v.trim().trim_matches(['"', '\'', '`']).trim();
    if v.is_empty() || v.eq_ignore_ascii_case("none") || v.eq_ignore_ascii_case("null") {
        None
    } else {
        Some(v.to_string())
    }
}

fn pair_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)([a-z][a-z_ -]*?)\s*=\s*([^|\n⟨⟩<>=]*)").expect("valid regex")
    })
}

/// Read the keyed answer out of a model response. Never fails: responses
/// without any requested key come back as [`ParseStatus::Unparseable`].
pub fn parse_llm_output(response: &str, expected: &[TaskKey]) -> ParsedLlmOutput {
    let mut values = BTreeMap::new();
    if let Some(block) = last_block(response) {
        for segment in block.split('|') {
            if let Some((key, value)) = segment.split_once('=') {
                if let Some(key) = TaskKey::from_label(key).filter(|k| expected.contains(k)) {
                    values.entry(key).or_insert_with(|| clean_value(value));
                }
            }
        }
    }
    if values.is_empty() {
        for cap in pair_regex().captures_iter(response) {
            if let Some(key) = TaskKey::from_label(&cap[1]).filter(|k| expected.contains(k)) {
                values.entry(key).or_insert_with(|| clean_value(&cap[2]));
            }
        }
    }
    let status = if values.is_empty() {
        ParseStatus::Unparseable
    } else if expected.iter().all(|k| values.contains_key(k)) {
        ParseStatus::Ok
    } else {
        ParseStatus::Partial
    };
    ParsedLlmOutput {
        values,
        status,
        raw: response.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const ALL: [TaskKey; 4] = TaskKey::ALL;

    #[test]
    fn full_block_with_none() {
        let p = parse_llm_output(
            "⟨age=5 4/12 | sex=F | drugs=Zyrtec | skin_changes=None⟩",
            &ALL,
        );
        assert_eq!(p.status, ParseStatus::Ok);
        assert_eq!(p.get(TaskKey::Age), Some("5 4/12"));
        assert_eq!(p.get(TaskKey::Sex), Some("F"));
        assert_eq!(p.get(TaskKey::Drugs), Some("Zyrtec"));
        assert_eq!(p.values.get(&TaskKey::SkinChanges), Some(&None));
    }

    #[test]
    fn prose_is_unparseable() {
        let text = "The text does not contain any information about the patient's gender. \
                    Therefore, I have filled in the gender as 'F' based on the common gender for a 13-year-old.";
        let p = parse_llm_output(text, &ALL);
        assert_eq!(p.status, ParseStatus::Unparseable);
        assert!(p.values.is_empty());
        assert_eq!(p.raw, text);
    }

    #[test]
    fn bare_pair_is_partial() {
        let p = parse_llm_output("sex=M", &ALL);
        assert_eq!(p.status, ParseStatus::Partial);
        assert_eq!(p.get(TaskKey::Sex), Some("M"));
        assert_eq!(
            p.missing(&ALL),
            [TaskKey::Age, TaskKey::Drugs, TaskKey::SkinChanges]
        );
    }

    #[test]
    fn last_block_wins_and_ascii_brackets() {
        let text = "Example: <age=1 | sex=M>\nAnswer: <Age = 7 | SEX = f | Skin Changes = rumień | drugs = >";
        let p = parse_llm_output(text, &ALL);
        assert_eq!(p.status, ParseStatus::Ok);
        assert_eq!(p.get(TaskKey::Age), Some("7"));
        assert_eq!(p.get(TaskKey::Sex), Some("f"));
        assert_eq!(p.get(TaskKey::SkinChanges), Some("rumień"));
        assert_eq!(p.values.get(&TaskKey::Drugs), Some(&None));
    }

    #[test]
    fn unexpected_keys_are_ignored() {
        let p = parse_llm_output("⟨age=4 | sex=M⟩", &[TaskKey::Age]);
        assert_eq!(p.status, ParseStatus::Ok);
        assert_eq!(p.values.len(), 1);
        let p = parse_llm_output("⟨weight=20 | mood=ok⟩", &ALL);
        assert_eq!(p.status, ParseStatus::Unparseable);
    }

    #[test]
    fn fallback_scan_over_lines() {
        let p = parse_llm_output(
            "Here you go:\nage = 3\nsex = \"F\"\ndrugs=Zyrtec, Fenistil\nskin_changes=None",
            &ALL,
        );
        assert_eq!(p.status, ParseStatus::Ok);
        assert_eq!(p.get(TaskKey::Sex), Some("F"));
        assert_eq!(p.get(TaskKey::Drugs), Some("Zyrtec, Fenistil"));
    }

    fn value() -> impl Strategy<Value = Option<String>> {
        const EDGE: &str = "[a-zA-Z0-9ąęłóśżź/.,;:()-]";
        let inner = format!("{EDGE}([a-zA-Z0-9ąęłóśżź/.,;:()'\" -]{{0,14}}{EDGE})?");
        prop::option::of(
            proptest::string::string_regex(&inner)
                .expect("valid regex")
                .prop_filter("not a null word", |s| {
                    !s.eq_ignore_ascii_case("none") && !s.eq_ignore_ascii_case("null")
                }),
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn round_trip(age in value(), sex in value(), drugs in value(), skin in value()) {
            let fields = vec![
                (TaskKey::Age, age),
                (TaskKey::Sex, sex),
                (TaskKey::Drugs, drugs),
                (TaskKey::SkinChanges, skin),
            ];
            let p = parse_llm_output(&format_llm_output(&fields), &ALL);
            prop_assert_eq!(p.status, ParseStatus::Ok);
            prop_assert_eq!(p.values, fields.into_iter().collect::<BTreeMap<_, _>>());
        }

        #[test]
        fn never_panics(bytes in prop::collection::vec(any::<u8>(), 0..200)) {
            let text = String::from_utf8_lossy(&bytes);
            let p = parse_llm_output(&text, &ALL);
            prop_assert_eq!(p.raw, text.into_owned());
        }

        #[test]
        fn never_panics_on_near_misses(text in "[<>⟨⟩|= a-z_]{0,60}") {
            parse_llm_output(&text, &ALL);
        }
    }
}
