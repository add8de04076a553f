//! Record ingestion (JSON Lines) and per-group text-length statistics.
//!
//! Input schema, one object per line:
//!
//! ```text
//! {"id": str, "doctor": str, "icd10": str?, "language": "pl"|"en", "text": str,
//!  "gold": {"age_years": int, "age_months": int, "sex": "M"|"F",
//!           "lesions": [str], "drugs": [str]}?}
//! ```
//!
//! Statistics use the population standard deviation (divide by `n`).

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::drug_match::normalize_drug_name;
use crate::rule_extract::{AgeValue, Sex};
use crate::textproc::Segmenter;

/// Group label for records without an ICD-10 code.
pub const UNKNOWN_GROUP: &str = "UNKNOWN";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: invalid `{field}`: {reason}")]
    Invalid {
        line: usize,
        field: &'static str,
        reason: String,
    },
    #[error("duplicate id `{id}` on lines {first_line} and {second_line}")]
    DuplicateId {
        id: String,
        first_line: usize,
        second_line: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Language {
    #[serde(rename = "pl", alias = "PL")]
    Pl,
    #[serde(rename = "en", alias = "EN")]
    En,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldLabel {
    pub age: Option<AgeValue>,
    pub sex: Option<Sex>,
    /// At most one normalized lesion term.
    pub lesion: Option<String>,
    /// Normalized drug names.
    pub drugs: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpicrisisRecord {
    pub id: String,
    pub doctor: String,
    pub icd10: Option<String>,
    pub language: Language,
    pub text: String,
    pub gold: Option<GoldLabel>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGold {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    age_years: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    age_months: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sex: Option<Sex>,
    #[serde(default)]
    lesions: Vec<String>,
    #[serde(default)]
    drugs: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawRecord {
    id: String,
    doctor: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    icd10: Option<String>,
    language: Language,
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gold: Option<RawGold>,
}

impl RawRecord {
    fn validate(self, line: usize) -> Result<EpicrisisRecord, CorpusError> {
        let invalid = |field, reason: &str| CorpusError::Invalid {
            line,
            field,
            reason: reason.to_string(),
        };
        if self.id.trim().is_empty() {
            return Err(invalid("id", "must be non-empty"));
        }
        if self.text.trim().is_empty() {
            return Err(invalid("text", "must be non-empty"));
        }
        let gold = self
            .gold
            .map(|g| -> Result<GoldLabel, CorpusError> {
                let age = match (g.age_years, g.age_months) {
                    (None, None) => None,
                    (None, Some(_)) => {
                        return Err(invalid("gold.age_years", "required with age_months"))
                    }
                    (Some(y), m) => Some(
                        AgeValue::new(y, m.unwrap_or(0))
                            .map_err(|e| invalid("gold.age_months", &e.to_string()))?,
                    ),
                };
                if g.lesions.len() > 1 {
                    return Err(invalid(
                        "gold.lesions",
                        "at most one lesion term per record",
                    ));
                }
                let lesion = g
                    .lesions
                    .first()
                    .map(|l| l.trim().to_lowercase())
                    .filter(|l| !l.is_empty());
                let mut drugs = BTreeSet::new();
                for d in &g.drugs {
                    let name = normalize_drug_name(d);
                    if name.is_empty() {
                        return Err(invalid("gold.drugs", "empty drug name"));
                    }
                    if !drugs.insert(name) {
                        return Err(invalid(
                            "gold.drugs",
                            &format!("`{d}` is duplicated after normalization"),
                        ));
                    }
                }
                Ok(GoldLabel {
                    age,
                    sex: g.sex,
                    lesion,
                    drugs,
                })
            })
            .transpose()?;
        Ok(EpicrisisRecord {
            id: self.id,
            doctor: self.doctor,
            icd10: self.icd10.filter(|c| !c.trim().is_empty()),
            language: self.language,
            text: self.text,
            gold,
        })
    }
}

impl From<&EpicrisisRecord> for RawRecord {
    fn from(r: &EpicrisisRecord) -> Self {
        RawRecord {
            id: r.id.clone(),
            doctor: r.doctor.clone(),
            icd10: r.icd10.clone(),
            language: r.language,
            text: r.text.clone(),
            gold: r.gold.as_ref().map(|g| RawGold {
                age_years: g.age.map(|a| a.years()),
                age_months: g.age.map(|a| a.months()),
                sex: g.sex,
                lesions: g.lesion.iter().cloned().collect(),
                drugs: g.drugs.iter().cloned().collect(),
            }),
        }
    }
}

impl EpicrisisRecord {
    /// Serialize in the ingestion schema (one JSON object, no newline).
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(&RawRecord::from(self)).expect("record serializes")
    }
}

/// Parse and validate a JSON Lines corpus. Blank lines are skipped.
pub fn read_records(reader: impl BufRead) -> Result<Vec<EpicrisisRecord>, CorpusError> {
    let mut records = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| CorpusError::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        let record = raw.validate(lineno)?;
        if let Some(&first_line) = seen.get(&record.id) {
            return Err(CorpusError::DuplicateId {
                id: record.id,
                first_line,
                second_line: lineno,
            });
        }
        seen.insert(record.id.clone(), lineno);
        records.push(record);
    }
    Ok(records)
}

pub fn load_records(path: &Path) -> Result<Vec<EpicrisisRecord>, CorpusError> {
    let file = std::fs::File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_records(std::io::BufReader::new(file))
}

pub fn write_records(mut out: impl Write, records: &[EpicrisisRecord]) -> std::io::Result<()> {
    for r in records {
        writeln!(out, "{}", r.to_json_line())?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupBy {
    #[default]
    Doctor,
    Icd10,
}

impl GroupBy {
    pub fn key(self, record: &EpicrisisRecord) -> &str {
        match self {
            GroupBy::Doctor => &record.doctor,
            GroupBy::Icd10 => record.icd10.as_deref().unwrap_or(UNKNOWN_GROUP),
        }
    }
}

impl FromStr for GroupBy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "doctor" => Ok(GroupBy::Doctor),
            "icd10" => Ok(GroupBy::Icd10),
            other => Err(format!(
                "unknown group-by key `{other}` (expected doctor|icd10)"
            )),
        }
    }
}

impl fmt::Display for GroupBy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GroupBy::Doctor => "doctor",
            GroupBy::Icd10 => "icd10",
        })
    }
}

/// Sentence and word counts of one document.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TextCounts {
    pub sentences: usize,
    pub words: usize,
    pub first_sentence_words: usize,
}

impl TextCounts {
    pub fn of(text: &str, segmenter: &Segmenter) -> Self {
        let sentences = segmenter.split(text);
        TextCounts {
            sentences: sentences.len(),
            words: sentences.iter().map(|s| s.tokens.len()).sum(),
            first_sentence_words: sentences.first().map_or(0, |s| s.tokens.len()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsRow {
    pub group: String,
    pub n: usize,
    pub sent_mean: f64,
    pub sent_std: f64,
    pub word_mean: f64,
    pub word_std: f64,
    pub first_sent_mean: f64,
    pub first_sent_std: f64,
    pub words_per_sentence: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl StatsRow {
    /// Summarize one non-empty group of per-record counts.
    pub fn from_counts(group: impl Into<String>, counts: &[TextCounts]) -> Self {
        assert!(!counts.is_empty(), "stats row needs at least one record");
        let column = |f: fn(&TextCounts) -> usize| -> Vec<f64> {
            counts.iter().map(|c| f(c) as f64).collect()
        };
        let (sent_mean, sent_std) = mean_std(&column(|c| c.sentences));
        let (word_mean, word_std) = mean_std(&column(|c| c.words));
        let (first_sent_mean, first_sent_std) = mean_std(&column(|c| c.first_sentence_words));
        StatsRow {
            group: group.into(),
            n: counts.len(),
            sent_mean,
            sent_std,
            word_mean,
            word_std,
            first_sent_mean,
            first_sent_std,
            words_per_sentence: word_mean / sent_mean,
        }
    }
}

/// One row per group, ordered by group key.
pub fn corpus_stats(
    records: &[EpicrisisRecord],
    group_by: GroupBy,
    segmenter: &Segmenter,
) -> Vec<StatsRow> {
    let mut groups: BTreeMap<&str, Vec<TextCounts>> = BTreeMap::new();
    for r in records {
        groups
            .entry(group_by.key(r))
            .or_default()
            .push(TextCounts::of(&r.text, segmenter));
    }
    groups
        .into_iter()
        .map(|(key, counts)| StatsRow::from_counts(key, &counts))
        .collect()
}

pub const STATS_CSV_HEADER: [&str; 9] = [
    "group",
    "n",
    "sent_mean",
    "sent_std",
    "word_mean",
    "word_std",
    "first_sent_mean",
    "first_sent_std",
    "words_per_sentence",
];

pub fn write_stats_csv(out: impl Write, rows: &[StatsRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(STATS_CSV_HEADER)?;
    for r in rows {
        let nums = [
            r.sent_mean,
            r.sent_std,
            r.word_mean,
            r.word_std,
            r.first_sent_mean,
            r.first_sent_std,
            r.words_per_sentence,
        ];
        let mut fields = vec![r.group.clone(), r.n.to_string()];
        fields.extend(nums.iter().map(|v| format!("{v:.6}")));
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}
