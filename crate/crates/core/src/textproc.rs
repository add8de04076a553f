//! Tokenization, sentence segmentation and token normalization.
//!
//! Every extractor and every statistic in the crate goes through these
//! functions, so "word" and "sentence" mean the same thing everywhere:
//!
//! * a **token** is a whitespace-delimited chunk whose normalized form is
//!   non-empty (pure punctuation is dropped);
//! * a **sentence** ends at a chunk whose last character is `.`, `!` or `?`,
//!   unless that chunk is a known abbreviation such as `dr.` or `np.`.
//!
//! Offsets are byte offsets into the original text.

use std::collections::HashSet;
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

/// Abbreviations that do not end a sentence when followed by a period.
pub const DEFAULT_ABBREVIATIONS: &str = include_str!("../data/abbreviations.txt");

const TERMINATORS: [char; 3] = ['.', '!', '?'];
const CLOSERS: [char; 6] = [')', ']', '"', '\'', '»', '”'];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub normalized: String,
    /// Byte offset of `surface` in the source text.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub tokens: Vec<Token>,
    /// Byte span `[start, end)` in the source text.
    pub start: usize,
    pub end: usize,
}

impl Sentence {
    pub fn text<'a>(&self, source: &'a str) -> &'a str {
        &source[self.start..self.end]
    }
}

/// Lowercase, then strip leading and trailing non-alphanumeric characters.
///
/// Letters with diacritics are kept as they are. Characters whose lowercase
/// mapping expands to several code points keep only the first one, so the
/// result never has more characters than the input.
pub fn normalize_token(surface: &str) -> String {
    let lowered: String = surface
        .chars()
        .map(|c| c.to_lowercase().next().unwrap_or(c))
        .collect();
    lowered
        .trim_matches(|c: char| !c.is_alphanumeric())
        .to_string()
}

/// Transliterate to ASCII (`ż` → `z`, `ł` → `l`). Only used for drug matching.
pub fn fold_ascii(s: &str) -> String {
    deunicode::deunicode(s)
}

/// Whitespace chunks of `text` with their byte offsets.
fn chunks(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.split(char::is_whitespace)
        .filter(|s| !s.is_empty())
        .map(move |s| (s.as_ptr() as usize - text.as_ptr() as usize, s))
}

/// Split `text` on whitespace into normalized tokens.
pub fn tokenize(text: &str) -> Vec<Token> {
    tokenize_at(text, 0)
}

fn tokenize_at(text: &str, base: usize) -> Vec<Token> {
    chunks(text)
        .filter_map(|(offset, surface)| {
            let normalized = normalize_token(surface);
            (!normalized.is_empty()).then(|| Token {
                surface: surface.to_string(),
                normalized,
                offset: base + offset,
            })
        })
        .collect()
}

/// Sentence splitter with an abbreviation guard list.
#[derive(Debug, Clone)]
pub struct Segmenter {
    abbreviations: HashSet<String>,
}

impl Default for Segmenter {
    fn default() -> Self {
        Self::from_list(DEFAULT_ABBREVIATIONS)
    }
}

impl Segmenter {
    pub fn new<I, S>(abbreviations: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self {
            abbreviations: abbreviations
                .into_iter()
                .map(|a| normalize_abbreviation(a.as_ref()))
                .filter(|a| !a.is_empty())
                .collect(),
        }
    }

    /// Parse a guard list: one abbreviation per line, `#` starts a comment.
    pub fn from_list(list: &str) -> Self {
        Self::new(
            list.lines()
                .map(|l| l.split('#').next().unwrap_or("").trim())
                .filter(|l| !l.is_empty()),
        )
    }

    pub fn from_file(path: &Path) -> std::io::Result<Self> {
        Ok(Self::from_list(&std::fs::read_to_string(path)?))
    }

    pub fn is_abbreviation(&self, word: &str) -> bool {
        self.abbreviations.contains(&normalize_abbreviation(word))
    }

    pub fn split(&self, text: &str) -> Vec<Sentence> {
        let mut spans = Vec::new();
        let mut current: Option<(usize, usize)> = None;
        for (offset, chunk) in chunks(text) {
            let end = offset + chunk.len();
            let start = current.map_or(offset, |(s, _)| s);
            current = Some((start, end));
            if self.ends_sentence(chunk) {
                spans.push((start, end));
                current = None;
            }
        }
        spans.extend(current);
        spans
            .into_iter()
            .map(|(start, end)| Sentence {
                tokens: tokenize_at(&text[start..end], start),
                start,
                end,
            })
            .collect()
    }

    fn ends_sentence(&self, chunk: &str) -> bool {
        let trimmed = chunk.trim_end_matches(CLOSERS);
        match trimmed.chars().last() {
            Some('.') => !self.is_abbreviation(trimmed),
            Some(c) => TERMINATORS.contains(&c),
            None => false,
        }
    }
}

fn normalize_abbreviation(word: &str) -> String {
    word.trim_start_matches(|c: char| !c.is_alphanumeric())
        .trim_end_matches('.')
        .to_lowercase()
}

/// Split with the default abbreviation list.
pub fn split_sentences(text: &str) -> Vec<Sentence> {
    static DEFAULT: OnceLock<Segmenter> = OnceLock::new();
    DEFAULT.get_or_init(Segmenter::default).split(text)
}
