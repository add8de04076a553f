use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::{MethodKind, PipelineError, RulePipeline, RunConfig};
use crate::corpus::{
    corpus_stats, load_records, write_records, EpicrisisRecord, GoldLabel, Language, StatsRow,
};
use crate::extraction::{DiagnosticCode, Extraction};
use crate::llm::{
    extract_via_llm, translate_record, ChatBackend, HttpChatClient, PromptSpec, PromptTemplate,
};
use crate::metrics::{write_report_csv, write_report_json, EvalReport};

/// Group name of the row covering every evaluated record.
pub const OVERALL_GROUP: &str = "ALL";

/// How records are turned into extractions.
pub enum Extractor {
    Rule(RulePipeline),
    Llm {
        spec: PromptSpec,
        backend: Box<dyn ChatBackend>,
    },
}

impl Extractor {
    /// Load lexicons or build the HTTP client; fails before any record is read.
    pub fn from_config(config: &RunConfig) -> Result<Self, PipelineError> {
        match config.method {
            MethodKind::Rule => Ok(Extractor::Rule(RulePipeline::load(
                &config.lexicons,
                config.drug_options,
            )?)),
            MethodKind::Llm => {
                let client = HttpChatClient::new(config.require_llm()?.clone())?;
                Ok(Extractor::Llm {
                    spec: prompt_spec(config)?,
                    backend: Box::new(client),
                })
            }
        }
    }

    pub fn extract(&self, record: &EpicrisisRecord) -> Result<Extraction, String> {
        match self {
            Extractor::Rule(p) => p.extract(record).map_err(|e| e.to_string()),
            Extractor::Llm { spec, backend } => {
                extract_via_llm(record, spec, backend.as_ref()).map_err(|e| e.to_string())
            }
        }
    }
}

fn prompt_spec(config: &RunConfig) -> Result<PromptSpec, PipelineError> {
    let mut spec = PromptSpec::default();
    if let Some(path) = &config.prompt_template {
        spec.template = PromptTemplate::from_file(path)?;
    }
    Ok(spec)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RecordError {
    pub id: String,
    pub message: String,
}

/// Counts reported after an extraction run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RunSummary {
    pub records: usize,
    pub written: usize,
    pub age_absent: usize,
    pub sex_absent: usize,
    pub lesion_absent: usize,
    pub drugs_absent: usize,
    pub unparseable: usize,
    pub diagnostics: BTreeMap<DiagnosticCode, usize>,
    pub errors: Vec<RecordError>,
}

impl RunSummary {
    fn add(&mut self, e: &Extraction) {
        self.written += 1;
        self.age_absent += usize::from(e.age.is_none());
        self.sex_absent += usize::from(e.sex.is_none());
        self.lesion_absent += usize::from(e.lesion.is_none());
        self.drugs_absent += usize::from(e.drugs.is_empty());
        self.unparseable += usize::from(e.has_diagnostic(DiagnosticCode::LlmUnparseable));
        for d in &e.diagnostics {
            *self.diagnostics.entry(d.code).or_default() += 1;
        }
    }

    /// 0 when every record was processed, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        i32::from(!self.errors.is_empty())
    }
}

impl fmt::Display for RunSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "records: {}", self.records)?;
        writeln!(f, "written: {}", self.written)?;
        writeln!(
            f,
            "absent: age {}, sex {}, lesion {}, drugs {}",
            self.age_absent, self.sex_absent, self.lesion_absent, self.drugs_absent
        )?;
        if self.unparseable > 0 {
            writeln!(f, "unparseable responses: {}", self.unparseable)?;
        }
        for (code, n) in &self.diagnostics {
            writeln!(f, "diagnostic {code}: {n}")?;
        }
        writeln!(f, "errors: {}", self.errors.len())?;
        for e in &self.errors {
            writeln!(f, "  {}: {}", e.id, e.message)?;
        }
        Ok(())
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, PipelineError> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

fn pool(concurrency: usize) -> Result<rayon::ThreadPool, PipelineError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(concurrency)
        .build()
        .map_err(|e| PipelineError::Config(e.to_string()))
}

/// Apply `f` to every record on a bounded pool, keeping input order.
pub fn map_records<T, F>(
    records: &[EpicrisisRecord],
    concurrency: usize,
    f: F,
) -> Result<Vec<T>, PipelineError>
where
    T: Send,
    F: Fn(&EpicrisisRecord) -> T + Sync,
{
    Ok(pool(concurrency)?.install(|| records.par_iter().map(&f).collect()))
}

/// Extract every record and write the successful results as JSON Lines in
/// input order.
pub fn extract_records(
    records: &[EpicrisisRecord],
    extractor: &Extractor,
    concurrency: usize,
    out: impl Write,
) -> Result<RunSummary, PipelineError> {
    let results = map_records(records, concurrency, |r| extractor.extract(r))?;
    let mut out = out;
    let mut summary = RunSummary {
        records: records.len(),
        ..RunSummary::default()
    };
    for (record, result) in records.iter().zip(results) {
        match result {
            Ok(e) => {
                serde_json::to_writer(&mut out, &e).expect("extraction serializes");
                out.write_all(b"\n")
                    .map_err(|e| PipelineError::Write(e.to_string()))?;
                summary.add(&e);
            }
            Err(message) => summary.errors.push(RecordError {
                id: record.id.clone(),
                message,
            }),
        }
    }
    out.flush()
        .map_err(|e| PipelineError::Write(e.to_string()))?;
    Ok(summary)
}

pub fn run_extract(config: &RunConfig) -> Result<RunSummary, PipelineError> {
    config.validate_for_extract()?;
    let extractor = Extractor::from_config(config)?;
    run_extract_with(config, &extractor)
}

/// [`run_extract`] with a ready-made extractor.
pub fn run_extract_with(
    config: &RunConfig,
    extractor: &Extractor,
) -> Result<RunSummary, PipelineError> {
    let records = load_records(config.require_input()?)?;
    let output = config.require_output()?;
    extract_records(&records, extractor, config.concurrency, create(output)?)
}

/// Read an extraction file written by [`run_extract`].
pub fn load_extractions(path: &Path) -> Result<Vec<Extraction>, PipelineError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut out: Vec<Extraction> = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| PipelineError::Extractions {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let e: Extraction = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        if let Some(first) = seen.insert(e.id.clone(), i + 1) {
            return Err(bad(format!(
                "duplicate id `{}` (first on line {first})",
                e.id
            )));
        }
        out.push(e);
    }
    Ok(out)
}

/// Per-group reports followed by the overall row. Records without gold
/// labels are skipped; gold records without an extraction count as
/// all-absent.
pub fn evaluate(
    records: &[EpicrisisRecord],
    extractions: &[Extraction],
    config: &RunConfig,
) -> Result<Vec<EvalReport>, PipelineError> {
    let known: HashMap<&str, &EpicrisisRecord> =
        records.iter().map(|r| (r.id.as_str(), r)).collect();
    let unknown: Vec<String> = extractions
        .iter()
        .filter(|e| !known.contains_key(e.id.as_str()))
        .map(|e| e.id.clone())
        .collect();
    if !unknown.is_empty() {
        return Err(PipelineError::UnknownIds(unknown));
    }
    let by_id: HashMap<&str, &Extraction> =
        extractions.iter().map(|e| (e.id.as_str(), e)).collect();

    type Item<'a> = (Option<&'a Extraction>, &'a GoldLabel);
    let mut groups: BTreeMap<&str, Vec<Item>> = BTreeMap::new();
    let mut all: Vec<Item> = Vec::new();
    for record in records {
        let Some(gold) = &record.gold else { continue };
        let item = (by_id.get(record.id.as_str()).copied(), gold);
        groups
            .entry(config.group_by.key(record))
            .or_default()
            .push(item);
        all.push(item);
    }
    let mut reports: Vec<EvalReport> = groups
        .into_iter()
        .map(|(group, items)| EvalReport::compute(group, &items, &config.eval))
        .collect();
    reports.push(EvalReport::compute(OVERALL_GROUP, &all, &config.eval));
    Ok(reports)
}

/// `stem.json` and `stem.csv` next to each other.
pub fn report_paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("json"), stem.with_extension("csv"))
}

pub fn run_evaluate(
    config: &RunConfig,
    extractions: &Path,
) -> Result<Vec<EvalReport>, PipelineError> {
    let records = load_records(config.require_input()?)?;
    let extractions = load_extractions(extractions)?;
    let reports = evaluate(&records, &extractions, config)?;
    if let Some(stem) = &config.output {
        let (json, csv) = report_paths(stem);
        let mut out = create(&json)?;
        write_report_json(&mut out, &reports)
            .and_then(|_| out.flush())
            .map_err(io_err(&json))?;
        write_report_csv(create(&csv)?, &reports)
            .map_err(|e| PipelineError::Write(e.to_string()))?;
    }
    Ok(reports)
}

/// Text statistics per group; written as CSV when an output is set.
pub fn run_stats(config: &RunConfig) -> Result<Vec<StatsRow>, PipelineError> {
    let records = load_records(config.require_input()?)?;
    let segmenter = RulePipeline::load(&config.lexicons, config.drug_options)?.segmenter;
    let rows = corpus_stats(&records, config.group_by, &segmenter);
    if let Some(path) = &config.output {
        crate::corpus::write_stats_csv(create(path)?, &rows)
            .map_err(|e| PipelineError::Write(e.to_string()))?;
    }
    Ok(rows)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct TranslateSummary {
    pub records: usize,
    pub translated: usize,
    /// Records already in English.
    pub skipped: usize,
    pub errors: Vec<RecordError>,
}

impl TranslateSummary {
    pub fn exit_code(&self) -> i32 {
        i32::from(!self.errors.is_empty())
    }
}

impl fmt::Display for TranslateSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "records: {}", self.records)?;
        writeln!(f, "translated: {}", self.translated)?;
        writeln!(f, "skipped (not Polish): {}", self.skipped)?;
        writeln!(f, "errors: {}", self.errors.len())?;
        for e in &self.errors {
            writeln!(f, "  {}: {}", e.id, e.message)?;
        }
        Ok(())
    }
}

/// Translate the Polish records of a corpus into a new corpus file.
pub fn translate_records(
    records: &[EpicrisisRecord],
    template: &PromptTemplate,
    backend: &dyn ChatBackend,
    concurrency: usize,
    out: impl Write,
) -> Result<TranslateSummary, PipelineError> {
    let polish: Vec<EpicrisisRecord> = records
        .iter()
        .filter(|r| r.language == Language::Pl)
        .cloned()
        .collect();
    let results = map_records(&polish, concurrency, |r| {
        translate_record(r, template, backend)
    })?;
    let mut summary = TranslateSummary {
        records: records.len(),
        skipped: records.len() - polish.len(),
        ..TranslateSummary::default()
    };
    let mut translated = Vec::new();
    for (record, result) in polish.iter().zip(results) {
        match result {
            Ok(r) => translated.push(r),
            Err(e) => summary.errors.push(RecordError {
                id: record.id.clone(),
                message: e.to_string(),
            }),
        }
    }
    summary.translated = translated.len();
    let mut out = out;
    write_records(&mut out, &translated)
        .and_then(|_| out.flush())
        .map_err(|e| PipelineError::Write(e.to_string()))?;
    Ok(summary)
}

/// Translate with the HTTP client; `prompt_template`, when set, names a
/// translation template.
pub fn run_translate(config: &RunConfig) -> Result<TranslateSummary, PipelineError> {
    let client = HttpChatClient::new(config.require_llm()?.clone())?;
    let template = match &config.prompt_template {
        Some(p) => PromptTemplate::from_file(p)?,
        None => PromptTemplate::translation(),
    };
    let records = load_records(config.require_input()?)?;
    let output = config.require_output()?;
    translate_records(
        &records,
        &template,
        &client,
        config.concurrency,
        create(output)?,
    )
}
