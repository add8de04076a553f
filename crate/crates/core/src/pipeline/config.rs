use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use super::PipelineError;
use crate::corpus::GroupBy;
use crate::drug_match::{MatchOptions, DEFAULT_THRESHOLD};
use crate::llm::LlmEndpointConfig;
use crate::metrics::{AdjustedReading, DrugPredicate, EvalOptions};

/// Every key accepted in a config file or as an override.
pub const CONFIG_KEYS: &[&str] = &[
    "input",
    "output",
    "method",
    "gender_lexicon",
    "lesion_lexicon",
    "drug_db",
    "abbreviations",
    "threshold",
    "drug_window",
    "fold_ascii",
    "endpoint",
    "model",
    "temperature",
    "timeout_secs",
    "max_retries",
    "api_key_env",
    "prompt_template",
    "group_by",
    "concurrency",
    "fuzzy_drug_eval",
    "literal_adjusted_accuracy",
];

pub const DEFAULT_CONCURRENCY: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MethodKind {
    #[default]
    Rule,
    Llm,
}

impl FromStr for MethodKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rule" => Ok(MethodKind::Rule),
            "llm" => Ok(MethodKind::Llm),
            other => Err(format!("unknown method `{other}` (expected rule or llm)")),
        }
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MethodKind::Rule => "rule",
            MethodKind::Llm => "llm",
        })
    }
}

/// Raw `key = value` settings, later layers overriding earlier ones.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfigValues {
    values: BTreeMap<String, String>,
}

fn canonical_key(key: &str) -> String {
    key.trim()
        .trim_start_matches("--")
        .replace('-', "_")
        .to_ascii_lowercase()
}

impl ConfigValues {
    /// Parse a flat config file: one `key = value` per line, `#` comments.
    pub fn parse(text: &str) -> Result<Self, PipelineError> {
        let mut out = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |reason: String| PipelineError::ConfigFile {
                line: i + 1,
                reason,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad("expected `key = value`".into()))?;
            let key = canonical_key(key);
            if !CONFIG_KEYS.contains(&key.as_str()) {
                return Err(bad(format!("unknown key `{key}`")));
            }
            let value = value.trim().trim_matches('"');
            if out.values.insert(key.clone(), value.to_string()).is_some() {
                return Err(bad(format!("key `{key}` set twice")));
            }
        }
        Ok(out)
    }

    pub fn from_file(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|source| PipelineError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Set one key, replacing any earlier value.
    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<(), PipelineError> {
        let key = canonical_key(key);
        if !CONFIG_KEYS.contains(&key.as_str()) {
            return Err(PipelineError::Config(format!("unknown key `{key}`")));
        }
        self.values.insert(key, value.into());
        Ok(())
    }

    /// Apply every value of `other` on top of `self`.
    pub fn merge(&mut self, other: ConfigValues) {
        self.values.extend(other.values);
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values
            .get(key)
            .map(String::as_str)
            .filter(|v| !v.is_empty())
    }

    fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>, PipelineError>
    where
        T::Err: fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| PipelineError::Config(format!("{key} = `{v}`: {e}")))
            })
            .transpose()
    }

    fn flag(&self, key: &str) -> Result<bool, PipelineError> {
        match self.get(key).map(str::to_ascii_lowercase).as_deref() {
            None | Some("false" | "no" | "0" | "off") => Ok(false),
            Some("true" | "yes" | "1" | "on") => Ok(true),
            Some(v) => Err(PipelineError::Config(format!(
                "{key} = `{v}`: expected true or false"
            ))),
        }
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(PathBuf::from)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LexiconPaths {
    pub gender: Option<PathBuf>,
    pub lesion: Option<PathBuf>,
    pub drug_db: Option<PathBuf>,
    pub abbreviations: Option<PathBuf>,
}

/// Fully resolved settings for one subcommand run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub method: MethodKind,
    pub lexicons: LexiconPaths,
    pub drug_options: MatchOptions,
    /// Present whenever an endpoint was configured.
    pub llm: Option<LlmEndpointConfig>,
    pub prompt_template: Option<PathBuf>,
    pub group_by: GroupBy,
    pub concurrency: usize,
    pub eval: EvalOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input: None,
            output: None,
            method: MethodKind::Rule,
            lexicons: LexiconPaths::default(),
            drug_options: MatchOptions::default(),
            llm: None,
            prompt_template: None,
            group_by: GroupBy::Doctor,
            concurrency: DEFAULT_CONCURRENCY,
            eval: EvalOptions::default(),
        }
    }
}

impl RunConfig {
    /// Resolve raw settings, falling back to defaults for absent keys.
    pub fn from_values(values: &ConfigValues) -> Result<Self, PipelineError> {
        let threshold = values
            .parsed::<u8>("threshold")?
            .unwrap_or(DEFAULT_THRESHOLD);
        let drug_options = MatchOptions {
            threshold,
            window: values.parsed("drug_window")?.unwrap_or(1),
            fold_ascii: values.flag("fold_ascii")?,
        };
        drug_options
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;

        let llm = match values.get("endpoint") {
            None => {
                if values.get("model").is_some() {
                    return Err(PipelineError::Config(
                        "`model` is set but `endpoint` is not".into(),
                    ));
                }
                None
            }
            Some(endpoint) => {
                let model = values.get("model").ok_or_else(|| {
                    PipelineError::Config("`endpoint` is set but `model` is not".into())
                })?;
                let mut llm = LlmEndpointConfig::new(endpoint, model);
                if let Some(t) = values.parsed("temperature")? {
                    llm.temperature = t;
                }
                if let Some(secs) = values.parsed::<f64>("timeout_secs")? {
                    llm.timeout = Duration::try_from_secs_f64(secs)
                        .map_err(|e| PipelineError::Config(format!("timeout_secs: {e}")))?;
                }
                if let Some(r) = values.parsed("max_retries")? {
                    llm.max_retries = r;
                }
                llm.api_key_env = values.get("api_key_env").map(str::to_string);
                llm.validate()
                    .map_err(|e| PipelineError::Config(e.to_string()))?;
                Some(llm)
            }
        };

        let concurrency = values.parsed("concurrency")?.unwrap_or(DEFAULT_CONCURRENCY);
        if concurrency == 0 {
            return Err(PipelineError::Config(
                "concurrency must be at least 1".into(),
            ));
        }

        Ok(Self {
            input: values.path("input"),
            output: values.path("output"),
            method: values.parsed("method")?.unwrap_or_default(),
            lexicons: LexiconPaths {
                gender: values.path("gender_lexicon"),
                lesion: values.path("lesion_lexicon"),
                drug_db: values.path("drug_db"),
                abbreviations: values.path("abbreviations"),
            },
            drug_options,
            llm,
            prompt_template: values.path("prompt_template"),
            group_by: values.parsed("group_by")?.unwrap_or(GroupBy::Doctor),
            concurrency,
            eval: EvalOptions {
                drug_predicate: if values.flag("fuzzy_drug_eval")? {
                    DrugPredicate::Fuzzy { threshold }
                } else {
                    DrugPredicate::Exact
                },
                reading: if values.flag("literal_adjusted_accuracy")? {
                    AdjustedReading::Literal
                } else {
                    AdjustedReading::Balanced
                },
            },
        })
    }

    pub fn require_input(&self) -> Result<&Path, PipelineError> {
        self.input
            .as_deref()
            .ok_or_else(|| PipelineError::Config("an input file is required".into()))
    }

    pub fn require_output(&self) -> Result<&Path, PipelineError> {
        self.output
            .as_deref()
            .ok_or_else(|| PipelineError::Config("an output path is required".into()))
    }

    pub fn require_llm(&self) -> Result<&LlmEndpointConfig, PipelineError> {
        self.llm
            .as_ref()
            .ok_or_else(|| PipelineError::Config("an endpoint and a model are required".into()))
    }

    /// Checks that depend on the extraction method.
    pub fn validate_for_extract(&self) -> Result<(), PipelineError> {
        self.require_input()?;
        self.require_output()?;
        match self.method {
            MethodKind::Llm => {
                self.require_llm()?;
            }
            MethodKind::Rule => {
                let l = &self.lexicons;
                let missing: Vec<&str> = [
                    ("gender_lexicon", &l.gender),
                    ("lesion_lexicon", &l.lesion),
                    ("drug_db", &l.drug_db),
                ]
                .into_iter()
                .filter(|(_, p)| p.is_none())
                .map(|(k, _)| k)
                .collect();
                if !missing.is_empty() {
                    return Err(PipelineError::Config(format!(
                        "method rule requires {}",
                        missing.join(", ")
                    )));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_overrides() {
        let mut values = ConfigValues::parse(
            "# run settings\ninput = a.jsonl\nthreshold = 90\ngroup-by = icd10\n\nconcurrency=2\n",
        )
        .unwrap();
        let mut cli = ConfigValues::default();
        cli.set("--threshold", "85").unwrap();
        values.merge(cli);
        let cfg = RunConfig::from_values(&values).unwrap();
        assert_eq!(cfg.input.as_deref(), Some(Path::new("a.jsonl")));
        assert_eq!(cfg.drug_options.threshold, 85);
        assert_eq!(cfg.group_by, GroupBy::Icd10);
        assert_eq!(cfg.concurrency, 2);
        assert_eq!(cfg.method, MethodKind::Rule);
    }

    #[test]
    fn defaults() {
        let cfg = RunConfig::from_values(&ConfigValues::default()).unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.drug_options.threshold, 80);
    }

    #[test]
    fn file_errors_name_the_line() {
        for (text, line) in [
            ("input = a\nbogus = 1\n", 2),
            ("x\n", 1),
            ("input=a\ninput=b", 2),
        ] {
            match ConfigValues::parse(text) {
                Err(PipelineError::ConfigFile { line: l, .. }) => assert_eq!(l, line, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn invalid_values() {
        for (k, v) in [
            ("threshold", "0"),
            ("threshold", "101"),
            ("threshold", "abc"),
            ("concurrency", "0"),
            ("method", "neural"),
            ("group_by", "ward"),
            ("fold_ascii", "maybe"),
            ("model", "m"),
            ("endpoint", "http://x"),
        ] {
            let mut values = ConfigValues::default();
            values.set(k, v).unwrap();
            assert!(
                matches!(
                    RunConfig::from_values(&values),
                    Err(PipelineError::Config(_))
                ),
                "{k}={v}"
            );
        }
    }

    #[test]
    fn method_requirements() {
        let mut values = ConfigValues::default();
        values.set("input", "in").unwrap();
        values.set("output", "out").unwrap();
        values.set("gender_lexicon", "g.csv").unwrap();
        let err = RunConfig::from_values(&values)
            .unwrap()
            .validate_for_extract()
            .unwrap_err();
        assert!(err.to_string().contains("lesion_lexicon, drug_db"), "{err}");

        values.set("method", "llm").unwrap();
        assert!(RunConfig::from_values(&values)
            .unwrap()
            .validate_for_extract()
            .is_err());
        values.set("endpoint", "http://127.0.0.1:1").unwrap();
        values.set("model", "m").unwrap();
        values.set("timeout_secs", "1.5").unwrap();
        let cfg = RunConfig::from_values(&values).unwrap();
        cfg.validate_for_extract().unwrap();
        assert_eq!(
            cfg.require_llm().unwrap().timeout,
            Duration::from_millis(1500)
        );
    }
}
