//! Fuzzy drug-name recognition.
//!
//! Similarity is the token-set ratio over an indel (insert/delete only)
//! edit distance, scored 0 to 100. A document token is recognized as a drug
//! when its score against a registry name reaches the threshold (80 by
//! default).

use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::rule_extract::{list_entries, read_lexicon_file, Document, LexiconError};
use crate::textproc::{fold_ascii, Token};

pub const DEFAULT_THRESHOLD: u8 = 80;

/// Bundled 50-name sample registry.
pub const SAMPLE_REGISTRY: &str = include_str!("../data/drugs_sample.txt");

#[derive(Debug, Error)]
pub enum DrugMatchError {
    #[error("drug registry is empty")]
    EmptyRegistry,
    #[error("threshold must be in 1..=100, got {0}")]
    InvalidThreshold(u8),
    #[error("window must be in 1..=3, got {0}")]
    InvalidWindow(usize),
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
}

/// Lowercase, trim and collapse internal whitespace.
pub fn normalize_drug_name(name: &str) -> String {
    name.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

fn lcs_len(a: &[char], b: &[char]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for &ca in a {
        let mut diag = 0;
        for (j, &cb) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if ca == cb { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

/// Edit distance with insertions and deletions only.
pub fn indel_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    a.len() + b.len() - 2 * lcs_len(&a, &b)
}

/// `round(100 * (1 - indel / (len(a) + len(b))))`, half up; 100 for two
/// empty strings.
pub fn indel_ratio(a: &str, b: &str) -> u8 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let total = a.len() + b.len();
    if total == 0 {
        return 100;
    }
    let matched = 2 * lcs_len(&a, &b);
    // 100 * matched / total, rounded half up in integers
    ((200 * matched + total) / (2 * total)) as u8
}

fn token_set(s: &str) -> BTreeSet<&str> {
    s.split_whitespace().collect()
}

fn join<'a>(parts: impl IntoIterator<Item = &'a str>) -> String {
    parts.into_iter().collect::<Vec<_>>().join(" ")
}

fn token_set_ratio_sets(a: &BTreeSet<&str>, b: &BTreeSet<&str>) -> u8 {
    if a.is_empty() || b.is_empty() {
        return if a.is_empty() && b.is_empty() { 100 } else { 0 };
    }
    let common = join(a.intersection(b).copied());
    let with = |rest: String| match (common.is_empty(), rest.is_empty()) {
        (true, _) => rest,
        (_, true) => common.clone(),
        _ => format!("{common} {rest}"),
    };
    let t1 = with(join(a.difference(b).copied()));
    let t2 = with(join(b.difference(a).copied()));
    indel_ratio(&common, &t1)
        .max(indel_ratio(&common, &t2))
        .max(indel_ratio(&t1, &t2))
}

/// Order- and duplicate-insensitive similarity of two whitespace-tokenized
/// strings. Returns 0 when exactly one side has no tokens.
pub fn token_set_ratio(a: &str, b: &str) -> u8 {
    token_set_ratio_sets(&token_set(a), &token_set(b))
}

#[derive(Debug, Clone)]
struct DrugEntry {
    canonical: String,
    normalized: String,
    folded: String,
}

/// Canonical drug names with their normalized forms.
#[derive(Debug, Clone, Default)]
pub struct DrugRegistry {
    entries: Vec<DrugEntry>,
}

impl DrugRegistry {
    pub fn from_names<I, S>(names: I) -> Result<Self, LexiconError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let text = names
            .into_iter()
            .map(|s| s.as_ref().to_string())
            .collect::<Vec<_>>()
            .join("\n");
        Self::from_list(&text)
    }

    /// One canonical name per line; `#` starts a comment.
    pub fn from_list(text: &str) -> Result<Self, LexiconError> {
        let mut seen = HashSet::new();
        let mut entries = Vec::new();
        for (line, name) in list_entries(text) {
            let normalized = normalize_drug_name(name);
            if !seen.insert(normalized.clone()) {
                return Err(LexiconError::Invalid {
                    line,
                    reason: format!("`{name}` duplicates an earlier entry"),
                });
            }
            entries.push(DrugEntry {
                canonical: name.to_string(),
                folded: fold_ascii(&normalized),
                normalized,
            });
        }
        Ok(Self { entries })
    }

    pub fn from_file(path: &Path) -> Result<Self, LexiconError> {
        Self::from_list(&read_lexicon_file(path)?)
    }

    pub fn sample() -> Self {
        Self::from_list(SAMPLE_REGISTRY).expect("bundled registry is valid")
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.canonical.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatchOptions {
    pub threshold: u8,
    /// Longest run of consecutive tokens compared against registry names.
    pub window: usize,
    /// Transliterate both sides to ASCII before scoring.
    pub fold_ascii: bool,
}

impl Default for MatchOptions {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            window: 1,
            fold_ascii: false,
        }
    }
}

impl MatchOptions {
    pub fn validate(&self) -> Result<(), DrugMatchError> {
        if self.threshold == 0 || self.threshold > 100 {
            return Err(DrugMatchError::InvalidThreshold(self.threshold));
        }
        if !(1..=3).contains(&self.window) {
            return Err(DrugMatchError::InvalidWindow(self.window));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DrugMatch {
    pub canonical: String,
    pub surface: String,
    pub score: u8,
    /// Byte offset of the first matched token.
    pub offset: usize,
}

/// Every run of 1..=window consecutive tokens within one sentence.
fn spans(doc: &Document, window: usize) -> impl Iterator<Item = &[Token]> {
    doc.sentences.iter().flat_map(move |s| {
        (0..s.tokens.len()).flat_map(move |i| {
            (1..=window)
                .filter(move |w| i + w <= s.tokens.len())
                .map(move |w| &s.tokens[i..i + w])
        })
    })
}

/// Registry names recognized in `doc`, one match per name, in text order.
pub fn extract_drugs(
    doc: &Document,
    registry: &DrugRegistry,
    options: &MatchOptions,
) -> Result<Vec<DrugMatch>, DrugMatchError> {
    options.validate()?;
    if registry.is_empty() {
        return Err(DrugMatchError::EmptyRegistry);
    }
    let prepared: Vec<BTreeSet<&str>> = registry
        .entries
        .iter()
        .map(|e| {
            token_set(if options.fold_ascii {
                &e.folded
            } else {
                &e.normalized
            })
        })
        .collect();

    // registry index -> best match so far
    let mut best: HashMap<usize, DrugMatch> = HashMap::new();
    for span in spans(doc, options.window) {
        let text = join(span.iter().map(|t| t.normalized.as_str()));
        let text = if options.fold_ascii {
            fold_ascii(&text)
        } else {
            text
        };
        let tokens = token_set(&text);
        for (idx, entry_tokens) in prepared.iter().enumerate() {
            let score = token_set_ratio_sets(&tokens, entry_tokens);
            if score < options.threshold {
                continue;
            }
            let offset = span[0].offset;
            let better = best
                .get(&idx)
                .is_none_or(|m| score > m.score || (score == m.score && offset < m.offset));
            if better {
                best.insert(
                    idx,
                    DrugMatch {
                        canonical: registry.entries[idx].canonical.clone(),
                        surface: join(span.iter().map(|t| t.surface.as_str())),
                        score,
                        offset,
                    },
                );
            }
        }
    }
    let mut matches: Vec<(usize, DrugMatch)> = best.into_iter().collect();
    matches.sort_by_key(|(idx, m)| (m.offset, *idx));
    Ok(matches.into_iter().map(|(_, m)| m).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textproc::Segmenter;
    use proptest::prelude::*;

    /// Plain edit-distance DP with substitution cost 2.
    fn reference_indel(a: &str, b: &str) -> usize {
        let a: Vec<char> = a.chars().collect();
        let b: Vec<char> = b.chars().collect();
        let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
        for (i, row) in d.iter_mut().enumerate() {
            row[0] = i;
        }
        for (j, cell) in d[0].iter_mut().enumerate() {
            *cell = j;
        }
        for i in 1..=a.len() {
            for j in 1..=b.len() {
                let sub = if a[i - 1] == b[j - 1] { 0 } else { 2 };
                d[i][j] = (d[i - 1][j] + 1)
                    .min(d[i][j - 1] + 1)
                    .min(d[i - 1][j - 1] + sub);
            }
        }
        d[a.len()][b.len()]
    }

    fn reference_ratio(a: &str, b: &str) -> u8 {
        let total = a.chars().count() + b.chars().count();
        if total == 0 {
            return 100;
        }
        let r = 100.0 * (1.0 - reference_indel(a, b) as f64 / total as f64);
        // nudge so exact .5 values round up despite binary representation
        (r + 0.5 + 1e-9).floor() as u8
    }

    /// Literal transcription of the token-set procedure.
    fn reference_token_set(a: &str, b: &str) -> u8 {
        let mut sa: Vec<&str> = a.split_whitespace().collect();
        let mut sb: Vec<&str> = b.split_whitespace().collect();
        sa.sort();
        sa.dedup();
        sb.sort();
        sb.dedup();
        if sa.is_empty() || sb.is_empty() {
            return if sa.is_empty() && sb.is_empty() {
                100
            } else {
                0
            };
        }
        let inter: Vec<&str> = sa.iter().filter(|x| sb.contains(x)).copied().collect();
        let only_a: Vec<&str> = sa.iter().filter(|x| !sb.contains(x)).copied().collect();
        let only_b: Vec<&str> = sb.iter().filter(|x| !sa.contains(x)).copied().collect();
        let t0 = inter.join(" ");
        let t1 = format!("{} {}", t0, only_a.join(" ")).trim().to_string();
        let t2 = format!("{} {}", t0, only_b.join(" ")).trim().to_string();
        [
            reference_ratio(&t0, &t1),
            reference_ratio(&t0, &t2),
            reference_ratio(&t1, &t2),
        ]
        .into_iter()
        .max()
        .unwrap()
    }

    #[test]
    fn ratio_examples() {
        assert_eq!(indel_ratio("zyrtec", "zyrtec"), 100);
        assert_eq!(indel_distance("abcd", "abce"), 2);
        assert_eq!(indel_ratio("abcd", "abce"), 75);
        assert_eq!(indel_ratio("", "abc"), 0);
        assert_eq!(indel_ratio("", ""), 100);
        // 2*2/5 = 80 exactly; 2*1/3 = 66.67 -> 67; 2/4 -> 50
        assert_eq!(indel_ratio("ab", "abc"), 80);
        assert_eq!(indel_ratio("a", "ab"), 67);
        assert_eq!(indel_ratio("ab", "ac"), 50);
    }

    #[test]
    fn half_up_rounding() {
        // lcs 1 of total 16: 12.5 -> 13; lcs 3 of total 16: 37.5 -> 38
        assert_eq!(indel_ratio("aaaaaaab", "bbbbbbbb"), 13);
        assert_eq!(indel_ratio("abcxxxxx", "abcyyyyy"), 38);
    }

    #[test]
    fn token_set_examples() {
        assert_eq!(token_set_ratio("kot pies", "pies kot"), 100);
        assert_eq!(token_set_ratio("kot kot pies", "pies kot"), 100);
        let claritine = token_set_ratio("claritine", "claritin");
        assert_eq!(claritine, reference_token_set("claritine", "claritin"));
        assert_eq!(claritine, 94);
        assert!(claritine >= 80);
        assert_eq!(token_set_ratio("", ""), 100);
        assert_eq!(token_set_ratio("", "abc"), 0);
        assert_eq!(token_set_ratio("zyrtec", "zyrtec forte"), 100);
    }

    fn doc(text: &str) -> Document {
        Document::from_text("t", text, &Segmenter::default())
    }

    #[test]
    fn exact_presence() {
        let reg = DrugRegistry::from_names(["Zyrtec"]).unwrap();
        let m = extract_drugs(
            &doc("podano Zyrtec wieczorem"),
            &reg,
            &MatchOptions::default(),
        )
        .unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(
            (m[0].canonical.as_str(), m[0].score, m[0].offset),
            ("Zyrtec", 100, 7)
        );
    }

    #[test]
    fn misspelling_follows_oracle() {
        let reg = DrugRegistry::from_names(["zyrtec"]).unwrap();
        let oracle = reference_token_set("zyrteć", "zyrtec");
        assert_eq!(oracle, 83);
        let m = extract_drugs(&doc("Podano zyrteć."), &reg, &MatchOptions::default()).unwrap();
        assert_eq!(m.len(), usize::from(oracle >= 80));
        assert_eq!(m[0].score, oracle);

        let folded = MatchOptions {
            fold_ascii: true,
            ..Default::default()
        };
        assert_eq!(
            extract_drugs(&doc("Podano zyrteć."), &reg, &folded).unwrap()[0].score,
            100
        );
    }

    #[test]
    fn repeated_mention_is_deduplicated() {
        let reg = DrugRegistry::from_names(["Zyrtec", "Claritine"]).unwrap();
        let m = extract_drugs(
            &doc("Zyrtek rano. Claritine w południe. Zyrtec wieczorem."),
            &reg,
            &MatchOptions::default(),
        )
        .unwrap();
        let names: Vec<_> = m.iter().map(|m| (m.canonical.as_str(), m.score)).collect();
        assert_eq!(names, [("Claritine", 100), ("Zyrtec", 100)]);
    }

    #[test]
    fn multiword_names() {
        let reg = DrugRegistry::from_names(["Flixotide Dysk"]).unwrap();
        let single = extract_drugs(
            &doc("Flixotide dysk 2x dziennie"),
            &reg,
            &MatchOptions::default(),
        )
        .unwrap();
        // single tokens are subsets of the entry's token set
        assert_eq!(single[0].surface, "Flixotide");
        let windowed = MatchOptions {
            window: 2,
            ..Default::default()
        };
        let m = extract_drugs(&doc("Flixotide dysk 2x dziennie"), &reg, &windowed).unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].score, 100);
    }

    #[test]
    fn misconfiguration() {
        let empty = DrugRegistry::from_list("# none\n").unwrap();
        assert!(matches!(
            extract_drugs(&doc("x"), &empty, &MatchOptions::default()),
            Err(DrugMatchError::EmptyRegistry)
        ));
        let reg = DrugRegistry::sample();
        assert_eq!(reg.len(), 50);
        for bad in [
            MatchOptions {
                threshold: 0,
                ..Default::default()
            },
            MatchOptions {
                threshold: 101,
                ..Default::default()
            },
            MatchOptions {
                window: 4,
                ..Default::default()
            },
        ] {
            assert!(extract_drugs(&doc("x"), &reg, &bad).is_err());
        }
        assert!(DrugRegistry::from_list("Zyrtec\n zyrtec \n").is_err());
    }

    fn shuffle_words(words: &[String], seed: u64) -> Vec<String> {
        let mut v = words.to_vec();
        let n = v.len();
        for i in 0..n {
            let j = (seed
                .wrapping_mul(6364136223846793005)
                .wrapping_add(i as u64)
                % n as u64) as usize;
            v.swap(i, j);
        }
        v
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn indel_matches_reference(a in "[a-f]{0,12}", b in "[a-f]{0,12}") {
            prop_assert_eq!(indel_distance(&a, &b), reference_indel(&a, &b));
            let r = indel_ratio(&a, &b);
            prop_assert_eq!(r, reference_ratio(&a, &b));
            prop_assert_eq!(r, indel_ratio(&b, &a));
            prop_assert!(r <= 100);
            prop_assert_eq!(indel_ratio(&a, &a), 100);
        }

        #[test]
        fn token_set_matches_reference(a in "[a-f ]{0,12}", b in "[a-f ]{0,12}") {
            prop_assert_eq!(token_set_ratio(&a, &b), reference_token_set(&a, &b));
            prop_assert_eq!(token_set_ratio(&a, &b), token_set_ratio(&b, &a));
        }

        #[test]
        fn token_set_reorder_and_duplicate_invariant(
            a in prop::collection::vec("[a-f]{1,4}", 1..5),
            b in prop::collection::vec("[a-f]{1,4}", 1..5),
            seed in any::<u64>(),
            dup in 0usize..5,
        ) {
            let base = token_set_ratio(&a.join(" "), &b.join(" "));
            let mut a2 = shuffle_words(&a, seed);
            a2.push(a[dup % a.len()].clone());
            let b2 = shuffle_words(&b, seed ^ 0x9e37);
            prop_assert_eq!(token_set_ratio(&a2.join(" "), &b2.join(" ")), base);
        }

        #[test]
        fn raising_threshold_never_adds(words in prop::collection::vec("[a-e]{2,6}", 1..12), t in 1u8..100) {
            let reg = DrugRegistry::from_names(["abcd", "bcde", "aabb", "ed ca"]).unwrap();
            let d = doc(&words.join(" "));
            let lo = extract_drugs(&d, &reg, &MatchOptions { threshold: t, ..Default::default() }).unwrap();
            let hi = extract_drugs(&d, &reg, &MatchOptions { threshold: t + 1, ..Default::default() }).unwrap();
            let lo_names: HashSet<_> = lo.iter().map(|m| &m.canonical).collect();
            prop_assert!(hi.iter().all(|m| lo_names.contains(&m.canonical)));
            prop_assert!(lo.iter().all(|m| m.score >= t));
        }
    }
}
