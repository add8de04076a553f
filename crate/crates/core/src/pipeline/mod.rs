//! Orchestration of the extract, evaluate, stats and translate runs.

mod config;
mod rule;
mod run;

use std::path::PathBuf;

use thiserror::Error;

pub use config::{
    ConfigValues, LexiconPaths, MethodKind, RunConfig, CONFIG_KEYS, DEFAULT_CONCURRENCY,
};
pub use rule::RulePipeline;
pub use run::{
    evaluate, extract_records, load_extractions, map_records, report_paths, run_evaluate,
    run_extract, run_extract_with, run_stats, run_translate, translate_records, Extractor,
    RecordError, RunSummary, TranslateSummary, OVERALL_GROUP,
};

use crate::corpus::CorpusError;
use crate::llm::LlmError;
use crate::rule_extract::LexiconError;

/// Startup and configuration failures; the CLI maps these to exit code 2.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{0}")]
    Config(String),
    #[error("config file line {line}: {reason}")]
    ConfigFile { line: usize, reason: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("lexicon {}: {source}", path.display())]
    Lexicon { path: PathBuf, source: LexiconError },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("{}: line {line}: {message}", path.display())]
    Extractions {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("extractions reference unknown record ids: {}", .0.join(", "))]
    UnknownIds(Vec<String>),
    #[error("write failed: {0}")]
    Write(String),
}
