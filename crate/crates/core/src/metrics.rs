//! Evaluation arithmetic.
//!
//! Accuracies and errors are accumulated as integer counts or exact
//! rationals and only converted to `f64` at the end. Age errors are summed
//! in whole months, so the months figure is exactly twelve times the years
//! figure before conversion.

use std::collections::BTreeSet;
use std::io::Write;

use num_bigint::BigInt;
use num_rational::{BigRational, Ratio};
use num_traits::{ToPrimitive, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::corpus::GoldLabel;
use crate::drug_match::{normalize_drug_name, token_set_ratio};
use crate::extraction::{DiagnosticCode, Extraction};
use crate::rule_extract::AgeValue;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("metric is undefined on an empty input")]
    Empty,
}

/// Fraction of pairs whose prediction is present and satisfies `eq`.
pub fn field_accuracy<P, G>(
    pairs: &[(Option<P>, G)],
    eq: impl Fn(&P, &G) -> bool,
) -> Result<f64, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::Empty);
    }
    let correct = pairs
        .iter()
        .filter(|(p, g)| p.as_ref().is_some_and(|p| eq(p, g)))
        .count();
    Ok(correct as f64 / pairs.len() as f64)
}

/// Mean absolute age error, kept as a total of whole months.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AgeMae {
    pub total_abs_months: u64,
    pub count: u64,
    /// Pairs skipped because the prediction was absent.
    pub excluded: u64,
}

impl AgeMae {
    pub fn years_exact(&self) -> Ratio<u64> {
        Ratio::new(self.total_abs_months, 12 * self.count)
    }

    pub fn months_exact(&self) -> Ratio<u64> {
        Ratio::new(self.total_abs_months, self.count)
    }

    pub fn years(&self) -> f64 {
        self.total_abs_months as f64 / (12 * self.count) as f64
    }

    pub fn months(&self) -> f64 {
        self.total_abs_months as f64 / self.count as f64
    }
}

fn mae_by(
    pairs: &[(Option<AgeValue>, AgeValue)],
    months_of: impl Fn(&AgeValue) -> u32,
) -> Result<AgeMae, MetricsError> {
    let mut total = 0u64;
    let mut count = 0u64;
    for (pred, gold) in pairs {
        if let Some(pred) = pred {
            total += u64::from(months_of(pred).abs_diff(months_of(gold)));
            count += 1;
        }
    }
    if count == 0 {
        return Err(MetricsError::Empty);
    }
    Ok(AgeMae {
        total_abs_months: total,
        count,
        excluded: pairs.len() as u64 - count,
    })
}

/// MAE over pairs with a present prediction.
pub fn age_mae(pairs: &[(Option<AgeValue>, AgeValue)]) -> Result<AgeMae, MetricsError> {
    mae_by(pairs, AgeValue::total_months)
}

/// MAE after rounding both sides to whole years.
pub fn rounded_age_mae(pairs: &[(Option<AgeValue>, AgeValue)]) -> Result<AgeMae, MetricsError> {
    mae_by(pairs, |a| round_age_years(a) * 12)
}

pub fn round_age_years(age: &AgeValue) -> u32 {
    age.rounded_years()
}

/// Gold and predicted drug sets for one record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DrugEvalInstance {
    pub gold: BTreeSet<String>,
    pub predicted: BTreeSet<String>,
    /// Number of gold names that were found.
    pub correct_found: usize,
}

impl DrugEvalInstance {
    /// Exact membership after normalization.
    pub fn exact<I, J, S, T>(gold: I, predicted: J) -> Self
    where
        I: IntoIterator<Item = S>,
        J: IntoIterator<Item = T>,
        S: AsRef<str>,
        T: AsRef<str>,
    {
        let gold: BTreeSet<String> = gold
            .into_iter()
            .map(|s| normalize_drug_name(s.as_ref()))
            .collect();
        let predicted: BTreeSet<String> = predicted
            .into_iter()
            .map(|s| normalize_drug_name(s.as_ref()))
            .collect();
        let correct_found = gold.intersection(&predicted).count();
        Self {
            gold,
            predicted,
            correct_found,
        }
    }

    /// A gold name counts as found when some prediction scores at least
    /// `threshold` against it.
    pub fn fuzzy<I, J, S, T>(gold: I, predicted: J, threshold: u8) -> Self
    where
        I: IntoIterator<Item = S>,
        J: IntoIterator<Item = T>,
        S: AsRef<str>,
        T: AsRef<str>,
    {
        let mut inst = Self::exact(gold, predicted);
        inst.correct_found = inst
            .gold
            .iter()
            .filter(|g| {
                inst.predicted
                    .iter()
                    .any(|p| token_set_ratio(p, g) >= threshold)
            })
            .count();
        inst
    }
}

/// How to read the drug-score formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AdjustedReading {
    /// `(min/max + found/gold) / 2`; 1 for a perfect extraction.
    #[default]
    Balanced,
    /// `(min + found/gold) / (2 * max)`, the formula's typeset bracketing.
    Literal,
}

/// Per-record drug score.
pub fn drug_score(inst: &DrugEvalInstance, reading: AdjustedReading) -> Ratio<u64> {
    let gold = inst.gold.len() as u64;
    let pred = inst.predicted.len() as u64;
    match (gold, pred) {
        (0, 0) => return Ratio::from_integer(1),
        (0, _) | (_, 0) => return Ratio::zero(),
        _ => {}
    }
    let (lo, hi) = (gold.min(pred), gold.max(pred));
    let recall = Ratio::new(inst.correct_found as u64, gold);
    match reading {
        AdjustedReading::Balanced => (Ratio::new(lo, hi) + recall) / 2,
        AdjustedReading::Literal => (Ratio::from_integer(lo) + recall) / (2 * hi),
    }
}

/// Mean per-record drug score, summed exactly.
pub fn adjusted_accuracy(
    instances: &[DrugEvalInstance],
    reading: AdjustedReading,
) -> Result<f64, MetricsError> {
    if instances.is_empty() {
        return Err(MetricsError::Empty);
    }
    let sum = instances.iter().fold(BigRational::zero(), |acc, inst| {
        let s = drug_score(inst, reading);
        acc + BigRational::new(BigInt::from(*s.numer()), BigInt::from(*s.denom()))
    });
    let mean = sum / BigRational::from_integer(BigInt::from(instances.len()));
    Ok(mean.to_f64().expect("score in [0, 1]"))
}

/// How predicted drugs are compared with gold names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DrugPredicate {
    #[default]
    Exact,
    Fuzzy {
        threshold: u8,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EvalOptions {
    pub drug_predicate: DrugPredicate,
    pub reading: AdjustedReading,
}

/// Predicted lesion term matches gold when one contains the other.
pub fn lesion_matches(pred: &Option<String>, gold: &Option<String>) -> bool {
    match (pred, gold) {
        (None, None) => true,
        (Some(p), Some(g)) => {
            let (p, g) = (p.trim().to_lowercase(), g.trim().to_lowercase());
            !p.is_empty() && !g.is_empty() && (p.contains(&g) || g.contains(&p))
        }
        _ => false,
    }
}

/// Metric table for one group of records.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub group: String,
    /// Records with gold labels.
    pub n: usize,
    pub age_n: usize,
    pub age_accuracy: Option<f64>,
    pub age_mae_years: Option<f64>,
    pub age_mae_months: Option<f64>,
    pub rounded_age_accuracy: Option<f64>,
    pub rounded_age_mae_years: Option<f64>,
    pub sex_n: usize,
    pub sex_accuracy: Option<f64>,
    pub lesion_accuracy: Option<f64>,
    pub adjusted_accuracy: Option<f64>,
    pub age_absent: usize,
    pub sex_absent: usize,
    pub lesion_absent: usize,
    pub parse_failures: usize,
    /// Gold records with no extraction; scored as all-absent.
    pub missing_extractions: usize,
}

impl EvalReport {
    /// `items` pairs each gold label with its extraction, if one exists.
    pub fn compute(
        group: impl Into<String>,
        items: &[(Option<&Extraction>, &GoldLabel)],
        options: &EvalOptions,
    ) -> Self {
        let ages: Vec<(Option<AgeValue>, AgeValue)> = items
            .iter()
            .filter_map(|(e, g)| g.age.map(|gold| (e.and_then(|e| e.age), gold)))
            .collect();
        let sexes: Vec<_> = items
            .iter()
            .filter_map(|(e, g)| g.sex.map(|gold| (e.and_then(|e| e.sex), gold)))
            .collect();
        let lesions: Vec<(Option<Option<String>>, Option<String>)> = items
            .iter()
            .map(|(e, g)| (Some(e.and_then(|e| e.lesion.clone())), g.lesion.clone()))
            .collect();
        let drugs: Vec<DrugEvalInstance> = items
            .iter()
            .map(|(e, g)| {
                let predicted = e.map_or(&[][..], |e| &e.drugs[..]);
                match options.drug_predicate {
                    DrugPredicate::Exact => DrugEvalInstance::exact(&g.drugs, predicted),
                    DrugPredicate::Fuzzy { threshold } => {
                        DrugEvalInstance::fuzzy(&g.drugs, predicted, threshold)
                    }
                }
            })
            .collect();

        let mae = age_mae(&ages).ok();
        EvalReport {
            group: group.into(),
            n: items.len(),
            age_n: ages.len(),
            age_accuracy: field_accuracy(&ages, |p, g| p == g).ok(),
            age_mae_years: mae.map(|m| m.years()),
            age_mae_months: mae.map(|m| m.months()),
            rounded_age_accuracy: field_accuracy(&ages, |p, g| {
                round_age_years(p) == round_age_years(g)
            })
            .ok(),
            rounded_age_mae_years: rounded_age_mae(&ages).ok().map(|m| m.years()),
            sex_n: sexes.len(),
            sex_accuracy: field_accuracy(&sexes, |p, g| p == g).ok(),
            lesion_accuracy: field_accuracy(&lesions, lesion_matches).ok(),
            adjusted_accuracy: adjusted_accuracy(&drugs, options.reading).ok(),
            age_absent: ages.iter().filter(|(p, _)| p.is_none()).count(),
            sex_absent: sexes.iter().filter(|(p, _)| p.is_none()).count(),
            lesion_absent: items
                .iter()
                .filter(|(e, _)| e.is_none_or(|e| e.lesion.is_none()))
                .count(),
            parse_failures: items
                .iter()
                .filter(|(e, _)| {
                    e.is_some_and(|e| e.has_diagnostic(DiagnosticCode::LlmUnparseable))
                })
                .count(),
            missing_extractions: items.iter().filter(|(e, _)| e.is_none()).count(),
        }
    }
}

pub const REPORT_CSV_HEADER: [&str; 17] = [
    "group",
    "n",
    "age_n",
    "age_accuracy",
    "age_mae_years",
    "age_mae_months",
    "rounded_age_accuracy",
    "rounded_age_mae_years",
    "sex_n",
    "sex_accuracy",
    "lesion_accuracy",
    "adjusted_accuracy",
    "age_absent",
    "sex_absent",
    "lesion_absent",
    "parse_failures",
    "missing_extractions",
];

/// CSV summary; undefined metrics are empty cells.
pub fn write_report_csv(out: impl Write, reports: &[EvalReport]) -> csv::Result<()> {
    let cell = |v: Option<f64>| v.map(|v| format!("{v:.6}")).unwrap_or_default();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_CSV_HEADER)?;
    for r in reports {
        w.write_record([
            r.group.clone(),
            r.n.to_string(),
            r.age_n.to_string(),
            cell(r.age_accuracy),
            cell(r.age_mae_years),
            cell(r.age_mae_months),
            cell(r.rounded_age_accuracy),
            cell(r.rounded_age_mae_years),
            r.sex_n.to_string(),
            cell(r.sex_accuracy),
            cell(r.lesion_accuracy),
            cell(r.adjusted_accuracy),
            r.age_absent.to_string(),
            r.sex_absent.to_string(),
            r.lesion_absent.to_string(),
            r.parse_failures.to_string(),
            r.missing_extractions.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// JSON array with one object per group; undefined metrics are `null`.
pub fn write_report_json(mut out: impl Write, reports: &[EvalReport]) -> std::io::Result<()> {
    serde_json::to_writer_pretty(&mut out, reports)?;
    writeln!(out)
}
