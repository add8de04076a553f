use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use epicrisis::corpus::write_stats_csv;
use epicrisis::llm::mock::{MockServer, RuleEchoResponder, ScriptedResponder};
use epicrisis::metrics::write_report_csv;
use epicrisis::pipeline::{
    report_paths, run_evaluate, run_extract, run_stats, run_translate, ConfigValues, PipelineError,
    RulePipeline, RunConfig,
};

#[derive(Parser)]
#[command(
    name = "epicrisis",
    version,
    about = "Extract age, sex, skin lesions and drugs from discharge summaries"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the rule or LLM extractor over a corpus, writing JSON Lines.
    Extract(Settings),
    /// Score an extraction file against the gold labels of a corpus.
    Evaluate {
        /// Extraction file produced by `extract`.
        #[arg(long)]
        extractions: PathBuf,
        #[command(flatten)]
        settings: Settings,
    },
    /// Sentence and word statistics per doctor or diagnosis code.
    Stats(Settings),
    /// Translate Polish records into a new English corpus file.
    Translate(Settings),
    /// Serve a deterministic chat-completion endpoint for testing.
    MockServe {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        /// JSON Lines rules `{"contains": .., "content": ..}` tried before the rule echo.
        #[arg(long)]
        script: Option<PathBuf>,
        #[arg(long, default_value_t = 4)]
        workers: usize,
    },
}

/// Flags shared by every run; each overrides the same key in `--config`.
#[derive(Args, Default)]
struct Settings {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    input: Option<String>,
    /// Output file; for `evaluate`, the stem of the .json and .csv reports.
    #[arg(long)]
    output: Option<String>,
    /// rule or llm
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    gender_lexicon: Option<String>,
    #[arg(long)]
    lesion_lexicon: Option<String>,
    #[arg(long)]
    drug_db: Option<String>,
    #[arg(long)]
    abbreviations: Option<String>,
    /// Drug match threshold in 1..=100.
    #[arg(long)]
    threshold: Option<String>,
    /// Longest token run compared with registry names (1..=3).
    #[arg(long)]
    drug_window: Option<String>,
    /// Transliterate to ASCII before drug matching.
    #[arg(long)]
    fold_ascii: bool,
    /// Chat-completion server root, e.g. http://localhost:11434
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    temperature: Option<String>,
    #[arg(long)]
    timeout_secs: Option<String>,
    #[arg(long)]
    max_retries: Option<String>,
    /// Environment variable holding a bearer token.
    #[arg(long)]
    api_key_env: Option<String>,
    #[arg(long)]
    prompt_template: Option<String>,
    /// doctor or icd10
    #[arg(long)]
    group_by: Option<String>,
    #[arg(long)]
    concurrency: Option<String>,
    /// Count a gold drug as found when a prediction is within the threshold.
    #[arg(long)]
    fuzzy_drug_eval: bool,
    /// Score drugs as (min + found/gold) / (2 max) instead of the balanced form.
    #[arg(long)]
    literal_adjusted_accuracy: bool,
}

impl Settings {
    fn resolve(self) -> Result<RunConfig, PipelineError> {
        let mut values = match &self.config {
            Some(path) => ConfigValues::from_file(path)?,
            None => ConfigValues::default(),
        };
        let flags = [
            ("input", self.input),
            ("output", self.output),
            ("method", self.method),
            ("gender_lexicon", self.gender_lexicon),
            ("lesion_lexicon", self.lesion_lexicon),
            ("drug_db", self.drug_db),
            ("abbreviations", self.abbreviations),
            ("threshold", self.threshold),
            ("drug_window", self.drug_window),
            ("fold_ascii", self.fold_ascii.then(|| "true".into())),
            ("endpoint", self.endpoint),
            ("model", self.model),
            ("temperature", self.temperature),
            ("timeout_secs", self.timeout_secs),
            ("max_retries", self.max_retries),
            ("api_key_env", self.api_key_env),
            ("prompt_template", self.prompt_template),
            ("group_by", self.group_by),
            ("concurrency", self.concurrency),
            (
                "fuzzy_drug_eval",
                self.fuzzy_drug_eval.then(|| "true".into()),
            ),
            (
                "literal_adjusted_accuracy",
                self.literal_adjusted_accuracy.then(|| "true".into()),
            ),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                values.set(key, v)?;
            }
        }
        RunConfig::from_values(&values)
    }
}

fn run(command: Command) -> Result<u8, PipelineError> {
    match command {
        Command::Extract(settings) => {
            let config = settings.resolve()?;
            let summary = run_extract(&config)?;
            eprint!("{summary}");
            Ok(summary.exit_code() as u8)
        }
        Command::Evaluate {
            extractions,
            settings,
        } => {
            let config = settings.resolve()?;
            let reports = run_evaluate(&config, &extractions)?;
            match &config.output {
                Some(stem) => {
                    let (json, csv) = report_paths(stem);
                    eprintln!("wrote {} and {}", json.display(), csv.display());
                }
                None => write_report_csv(io::stdout().lock(), &reports)
                    .map_err(|e| PipelineError::Write(e.to_string()))?,
            }
            Ok(0)
        }
        Command::Stats(settings) => {
            let config = settings.resolve()?;
            let rows = run_stats(&config)?;
            if config.output.is_none() {
                write_stats_csv(io::stdout().lock(), &rows)
                    .map_err(|e| PipelineError::Write(e.to_string()))?;
            }
            Ok(0)
        }
        Command::Translate(settings) => {
            let config = settings.resolve()?;
            let summary = run_translate(&config)?;
            eprint!("{summary}");
            Ok(summary.exit_code() as u8)
        }
        Command::MockServe {
            addr,
            script,
            workers,
        } => {
            let echo = RuleEchoResponder::new(RulePipeline::with_defaults());
            let responder = match script {
                Some(path) => ScriptedResponder::new(echo)
                    .with_script_file(&path)
                    .map_err(|source| PipelineError::Io { path, source })?,
                None => ScriptedResponder::new(echo),
            };
            let server = MockServer::bind(&addr, responder, workers).map_err(|source| {
                PipelineError::Io {
                    path: PathBuf::from(&addr),
                    source,
                }
            })?;
            println!("{}", server.base_url());
            io::stdout().flush().ok();
            server.join();
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
