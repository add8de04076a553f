use super::{LexiconPaths, PipelineError};
use crate::corpus::EpicrisisRecord;
use crate::drug_match::{extract_drugs, DrugMatchError, DrugRegistry, MatchOptions};
use crate::extraction::{Extraction, Method};
use crate::rule_extract::{
    extract_age, extract_sex, extract_skin_lesion, AgeValue, Document, GenderCueLexicon,
    LesionLexicon, DEFAULT_MAX_AGE,
};
use crate::textproc::Segmenter;

/// The rule-based extractor with its lexicons loaded.
#[derive(Debug, Clone)]
pub struct RulePipeline {
    pub segmenter: Segmenter,
    pub gender: GenderCueLexicon,
    pub lesions: LesionLexicon,
    pub registry: DrugRegistry,
    pub drug_options: MatchOptions,
    pub max_age: AgeValue,
}

impl RulePipeline {
    /// Bundled lexicons and the sample drug registry.
    pub fn with_defaults() -> Self {
        Self {
            segmenter: Segmenter::default(),
            gender: GenderCueLexicon::default(),
            lesions: LesionLexicon::default(),
            registry: DrugRegistry::sample(),
            drug_options: MatchOptions::default(),
            max_age: DEFAULT_MAX_AGE,
        }
    }

    /// Load lexicons from `paths`, using the bundled ones for absent paths.
    pub fn load(paths: &LexiconPaths, drug_options: MatchOptions) -> Result<Self, PipelineError> {
        drug_options
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        let mut out = Self {
            drug_options,
            ..Self::with_defaults()
        };
        if let Some(p) = &paths.abbreviations {
            out.segmenter = Segmenter::from_file(p).map_err(|source| PipelineError::Io {
                path: p.clone(),
                source,
            })?;
        }
        let lexicon = |p: &std::path::Path, e| PipelineError::Lexicon {
            path: p.to_path_buf(),
            source: e,
        };
        if let Some(p) = &paths.gender {
            out.gender = GenderCueLexicon::from_file(p).map_err(|e| lexicon(p, e))?;
        }
        if let Some(p) = &paths.lesion {
            out.lesions = LesionLexicon::from_file(p).map_err(|e| lexicon(p, e))?;
        }
        if let Some(p) = &paths.drug_db {
            out.registry = DrugRegistry::from_file(p).map_err(|e| lexicon(p, e))?;
        }
        if out.registry.is_empty() {
            return Err(PipelineError::Config(
                DrugMatchError::EmptyRegistry.to_string(),
            ));
        }
        Ok(out)
    }

    pub fn extract(&self, record: &EpicrisisRecord) -> Result<Extraction, DrugMatchError> {
        let doc = Document::new(record, &self.segmenter);
        let mut out = Extraction::empty(&record.id, Method::Rule);
        let age = extract_age(&doc, self.max_age);
        let sex = extract_sex(&doc, &self.gender);
        let lesion = extract_skin_lesion(&doc, &self.lesions);
        out.age = age.value;
        out.sex = sex.value;
        out.lesion = lesion.value;
        out.drugs = extract_drugs(&doc, &self.registry, &self.drug_options)?
            .into_iter()
            .map(|m| m.canonical)
            .collect();
        out.diagnostics = [age.diagnostics, sex.diagnostics, lesion.diagnostics].concat();
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Language;
    use crate::extraction::DiagnosticCode;
    use crate::rule_extract::Sex;

    fn record(text: &str) -> EpicrisisRecord {
        EpicrisisRecord {
            id: "r".into(),
            doctor: "1".into(),
            icd10: None,
            language: Language::Pl,
            text: text.into(),
            gold: None,
        }
    }

    #[test]
    fn all_fields() {
        let e = RulePipeline::with_defaults()
            .extract(&record(
                "Pacjentka lat 5 i 4/12 przyjęta z powodu wysypki. Zalecono Zyrtec oraz Claritin.",
            ))
            .unwrap();
        assert_eq!(e.age, Some(AgeValue::new(5, 4).unwrap()));
        assert_eq!(e.sex, Some(Sex::F));
        assert_eq!(e.lesion.as_deref(), Some("wysypk"));
        assert_eq!(e.drugs, ["Zyrtec", "Claritine"]);
        assert!(e.diagnostics.is_empty(), "{:?}", e.diagnostics);
    }

    #[test]
    fn empty_text() {
        let e = RulePipeline::with_defaults()
            .extract(&record("  "))
            .unwrap();
        assert!(e.age.is_none() && e.sex.is_none() && e.lesion.is_none() && e.drugs.is_empty());
        assert!(e.has_diagnostic(DiagnosticCode::EmptyText));
        assert!(e.diagnostics.iter().all(|d| d.record_id == "r"));
    }

    #[test]
    fn missing_lexicon_file_is_a_startup_error() {
        let paths = LexiconPaths {
            gender: Some("/nonexistent/gender.csv".into()),
            ..LexiconPaths::default()
        };
        assert!(matches!(
            RulePipeline::load(&paths, MatchOptions::default()),
            Err(PipelineError::Lexicon { .. })
        ));
    }
}
