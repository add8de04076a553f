//! Information extraction from pediatric discharge summaries.
//!
//! Two extractors fill the same [`Extraction`] record: a rule pipeline
//! (age grammar, gender cues, lesion stems, fuzzy drug lookup) and an LLM
//! pipeline that prompts a chat-completion endpoint. [`metrics`] scores
//! either against gold labels and [`pipeline`] wires everything into runs.

pub mod corpus;
pub mod drug_match;
pub mod extraction;
pub mod llm;
pub mod metrics;
pub mod pipeline;
pub mod rule_extract;
pub mod textproc;

pub use corpus::{EpicrisisRecord, GoldLabel, GroupBy, Language, StatsRow};
pub use drug_match::{DrugMatch, DrugRegistry, MatchOptions};
pub use extraction::{Diagnostic, DiagnosticCode, Extraction, Method};
pub use llm::{LlmEndpointConfig, ParseStatus, TaskKey};
pub use metrics::{AdjustedReading, EvalOptions, EvalReport};
pub use pipeline::{PipelineError, RulePipeline, RunConfig, RunSummary};
pub use rule_extract::{AgeValue, Sex};
pub use textproc::{Segmenter, Token};
