//! The rule-based pipeline: age grammar, gender cues and lesion stems.
//!
//! Age and sex are only looked for in the first sentence; age is further
//! restricted to its first six tokens. Lesion stems are searched across the
//! whole document.

mod age;
mod lesion;
mod sex;

use std::path::PathBuf;

use thiserror::Error;

pub use age::{
    extract_age, parse_age_at, parse_age_expression, AgeValue, InvalidAge, AGE_WINDOW,
    DEFAULT_MAX_AGE,
};
pub use lesion::{extract_skin_lesion, LesionLexicon};
pub use sex::{extract_sex, GenderCueLexicon, Sex};

use crate::corpus::EpicrisisRecord;
use crate::extraction::Diagnostic;
use crate::textproc::{Segmenter, Sentence, Token};

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    Invalid { line: usize, reason: String },
    #[error("lexicon is empty")]
    Empty,
}

pub(crate) fn read_lexicon_file(path: &std::path::Path) -> Result<String, LexiconError> {
    std::fs::read_to_string(path).map_err(|source| LexiconError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Non-comment, non-blank lines with their 1-based line numbers.
pub(crate) fn list_entries(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty())
}

/// A record split into sentences, ready for the extractors.
#[derive(Debug, Clone)]
pub struct Document {
    pub id: String,
    pub sentences: Vec<Sentence>,
}

impl Document {
    pub fn new(record: &EpicrisisRecord, segmenter: &Segmenter) -> Self {
        Self::from_text(&record.id, &record.text, segmenter)
    }

    pub fn from_text(id: &str, text: &str, segmenter: &Segmenter) -> Self {
        Document {
            id: id.to_string(),
            sentences: segmenter.split(text),
        }
    }

    pub fn first_sentence(&self) -> &[Token] {
        self.sentences.first().map_or(&[], |s| &s.tokens)
    }

    pub fn tokens(&self) -> impl Iterator<Item = &Token> {
        self.sentences.iter().flat_map(|s| s.tokens.iter())
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.iter().all(|s| s.tokens.is_empty())
    }
}

/// A single-field extraction result with the notes it produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome<T> {
    pub value: Option<T>,
    pub diagnostics: Vec<Diagnostic>,
}

impl<T> Outcome<T> {
    fn new(value: Option<T>, diagnostics: Vec<Diagnostic>) -> Self {
        Self { value, diagnostics }
    }
}
