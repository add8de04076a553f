use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{read_lexicon_file, Document, LexiconError, Outcome};
use crate::extraction::{Diagnostic, DiagnosticCode};
use crate::textproc::normalize_token;

/// Default cues: five forms quoted in clinical notes plus three convenience
/// seeds (`był`, `chłopiec`, `dziewczynka`).
pub const DEFAULT_GENDER_CUES: &str = include_str!("../../data/gender_cues.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sex {
    M,
    F,
}

impl fmt::Display for Sex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sex::M => "M",
            Sex::F => "F",
        })
    }
}

impl FromStr for Sex {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "M" | "m" => Ok(Sex::M),
            "F" | "f" => Ok(Sex::F),
            other => Err(format!("expected M or F, got `{other}`")),
        }
    }
}

/// Exact-token map from inflected forms to the gender they mark.
#[derive(Debug, Clone)]
pub struct GenderCueLexicon {
    entries: HashMap<String, Sex>,
}

impl Default for GenderCueLexicon {
    fn default() -> Self {
        Self::from_csv(DEFAULT_GENDER_CUES).expect("bundled gender cues are valid")
    }
}

impl GenderCueLexicon {
    /// Parse `form,gender` rows. A `form,gender` header row is optional.
    pub fn from_csv(text: &str) -> Result<Self, LexiconError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(text.as_bytes());
        let mut entries = HashMap::new();
        for row in reader.records() {
            let row = row.map_err(|e| LexiconError::Invalid {
                line: e.position().map_or(0, |p| p.line() as usize),
                reason: e.to_string(),
            })?;
            let line = row.position().map_or(0, |p| p.line() as usize);
            let invalid = |reason: String| LexiconError::Invalid { line, reason };
            if row.len() != 2 {
                return Err(invalid(format!("expected 2 columns, got {}", row.len())));
            }
            if row[0].eq_ignore_ascii_case("form") && row[1].eq_ignore_ascii_case("gender") {
                continue;
            }
            let form = normalize_token(&row[0]);
            if form.is_empty() {
                return Err(invalid(format!(
                    "form `{}` is empty after normalization",
                    &row[0]
                )));
            }
            let sex: Sex = row[1].parse().map_err(invalid)?;
            match entries.insert(form.clone(), sex) {
                Some(prev) if prev != sex => {
                    return Err(invalid(format!(
                        "`{form}` is listed as both {prev} and {sex}"
                    )))
                }
                _ => {}
            }
        }
        if entries.is_empty() {
            return Err(LexiconError::Empty);
        }
        Ok(Self { entries })
    }

    pub fn from_file(path: &Path) -> Result<Self, LexiconError> {
        Self::from_csv(&read_lexicon_file(path)?)
    }

    pub fn get(&self, normalized: &str) -> Option<Sex> {
        self.entries.get(normalized).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Gender of the first cue token in the first sentence.
pub fn extract_sex(doc: &Document, lexicon: &GenderCueLexicon) -> Outcome<Sex> {
    let cues: Vec<_> = doc
        .first_sentence()
        .iter()
        .filter_map(|t| lexicon.get(&t.normalized).map(|s| (t, s)))
        .collect();
    let Some(&(first, sex)) = cues.first() else {
        return Outcome::new(
            None,
            vec![Diagnostic::new(
                &doc.id,
                DiagnosticCode::SexNoCue,
                "no gender cue in the first sentence",
            )],
        );
    };
    let mut diagnostics = Vec::new();
    if let Some((other, _)) = cues.iter().find(|(_, s)| *s != sex) {
        diagnostics.push(Diagnostic::new(
            &doc.id,
            DiagnosticCode::SexAmbiguous,
            format!(
                "`{}` ({sex}) precedes `{}` ({})",
                first.surface,
                other.surface,
                lexicon.get(&other.normalized).unwrap()
            ),
        ));
    }
    Outcome::new(Some(sex), diagnostics)
}
