use std::collections::HashSet;
use std::path::Path;

use super::{list_entries, read_lexicon_file, Document, LexiconError, Outcome};
use crate::extraction::{Diagnostic, DiagnosticCode};

/// Placeholder stems shipped for demonstration only.
pub const DEFAULT_LESION_STEMS: &str = include_str!("../../data/lesion_stems.txt");

/// Truncated skin-lesion keywords matched by substring containment.
#[derive(Debug, Clone)]
pub struct LesionLexicon {
    stems: Vec<String>,
}

impl Default for LesionLexicon {
    fn default() -> Self {
        Self::from_list(DEFAULT_LESION_STEMS).expect("bundled lesion stems are valid")
    }
}

impl LesionLexicon {
    /// One stem per line; `#` starts a comment. Stems are lowercased and
    /// must be single words without duplicates.
    pub fn from_list(text: &str) -> Result<Self, LexiconError> {
        let mut seen = HashSet::new();
        let mut stems = Vec::new();
        for (line, entry) in list_entries(text) {
            let stem = entry.to_lowercase();
            if stem.contains(char::is_whitespace) {
                return Err(LexiconError::Invalid {
                    line,
                    reason: format!("stem `{entry}` contains whitespace"),
                });
            }
            if !seen.insert(stem.clone()) {
                return Err(LexiconError::Invalid {
                    line,
                    reason: format!("duplicate stem `{stem}`"),
                });
            }
            stems.push(stem);
        }
        if stems.is_empty() {
            return Err(LexiconError::Empty);
        }
        Ok(Self { stems })
    }

    pub fn from_file(path: &Path) -> Result<Self, LexiconError> {
        Self::from_list(&read_lexicon_file(path)?)
    }

    pub fn stems(&self) -> &[String] {
        &self.stems
    }

    /// First stem, in lexicon order, contained in `token`.
    pub fn match_token(&self, token: &str) -> Option<&str> {
        self.stems
            .iter()
            .find(|s| token.contains(s.as_str()))
            .map(String::as_str)
    }
}

/// The stem found in the textually earliest matching token.
pub fn extract_skin_lesion(doc: &Document, lexicon: &LesionLexicon) -> Outcome<String> {
    let mut found: Vec<&str> = Vec::new();
    for token in doc.tokens() {
        for stem in lexicon.stems() {
            if token.normalized.contains(stem.as_str()) && !found.contains(&stem.as_str()) {
                found.push(stem);
            }
        }
    }
    let first = doc
        .tokens()
        .find_map(|t| lexicon.match_token(&t.normalized))
        .map(str::to_string);
    let mut diagnostics = Vec::new();
    if found.len() > 1 {
        diagnostics.push(Diagnostic::new(
            &doc.id,
            DiagnosticCode::LesionMultiple,
            format!("stems found: {}", found.join(", ")),
        ));
    }
    Outcome::new(first, diagnostics)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textproc::Segmenter;
    use proptest::prelude::*;

    fn lexicon() -> LesionLexicon {
        LesionLexicon::from_list("wysypk\nrumie\npokrzywk\n").unwrap()
    }

    fn lesion(text: &str, lex: &LesionLexicon) -> Outcome<String> {
        extract_skin_lesion(&Document::from_text("t", text, &Segmenter::default()), lex)
    }

    #[test]
    fn stem_inside_inflected_word() {
        let out = lesion("Przyjęta z powodu wysypką na tułowiu.", &lexicon());
        assert_eq!(out.value.as_deref(), Some("wysypk"));
        assert!(out.diagnostics.is_empty());
    }

    #[test]
    fn no_dermatology_vocabulary() {
        assert_eq!(
            lesion("Kaszel i katar od tygodnia.", &lexicon()).value,
            None
        );
    }

    #[test]
    fn earlier_stem_wins_and_both_are_noted() {
        let out = lesion("Zgłosiła się z rumieniem. Następnie pokrzywka.", &lexicon());
        assert_eq!(out.value.as_deref(), Some("rumie"));
        assert_eq!(out.diagnostics[0].code, DiagnosticCode::LesionMultiple);
        assert!(out.diagnostics[0].detail.contains("rumie, pokrzywk"));
    }

    #[test]
    fn lexicon_validation() {
        assert!(matches!(
            LesionLexicon::from_list("a\n# c\nA\n"),
            Err(LexiconError::Invalid { line: 3, .. })
        ));
        assert!(LesionLexicon::from_list("zmiana skórna\n").is_err());
        assert!(matches!(
            LesionLexicon::from_list("# only\n"),
            Err(LexiconError::Empty)
        ));
        assert!(!LesionLexicon::default().stems().is_empty());
    }

    /// All (token, stem) pairs, ordered by token position then lexicon order.
    fn brute_force(text: &str, stems: &[&str]) -> Option<String> {
        let words: Vec<String> = text
            .split_whitespace()
            .map(crate::textproc::normalize_token)
            .filter(|w| !w.is_empty())
            .collect();
        let mut hits = Vec::new();
        for (ti, w) in words.iter().enumerate() {
            for (si, s) in stems.iter().enumerate() {
                if w.contains(s) {
                    hits.push((ti, si));
                }
            }
        }
        hits.into_iter().min().map(|(_, si)| stems[si].to_string())
    }

    proptest! {
        #[test]
        fn matches_pairwise_scan(docs in prop::collection::vec(
            prop::collection::vec("[abkrwy]{1,7}[.,]?", 1..15), 1..=20)) {
            let stems = ["wy", "kra", "bb", "rwy"];
            let lex = LesionLexicon::from_list(&stems.join("\n")).unwrap();
            for words in docs {
                let text = words.join(" ");
                let got = lesion(&text, &lex).value;
                prop_assert_eq!(&got, &brute_force(&text, &stems));
                if let Some(s) = got {
                    prop_assert!(lex.stems().contains(&s));
                }
            }
        }
    }
}
