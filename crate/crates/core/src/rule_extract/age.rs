use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Document, Outcome};
use crate::extraction::{Diagnostic, DiagnosticCode};
use crate::textproc::Token;

/// Number of leading first-sentence tokens searched for an age.
pub const AGE_WINDOW: usize = 6;

/// Upper bound used when none is configured: 18 years 11 months.
pub const DEFAULT_MAX_AGE: AgeValue = AgeValue {
    years: 18,
    months: 11,
};

#[derive(Debug, Error, PartialEq, Eq)]
#[error("months must be below 12, got {0}")]
pub struct InvalidAge(pub u32);

/// Age in whole years plus whole months.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawAge")]
pub struct AgeValue {
    years: u32,
    months: u32,
}

#[derive(Deserialize)]
struct RawAge {
    years: u32,
    months: u32,
}

impl TryFrom<RawAge> for AgeValue {
    type Error = InvalidAge;

    fn try_from(raw: RawAge) -> Result<Self, Self::Error> {
        AgeValue::new(raw.years, raw.months)
    }
}

impl AgeValue {
    pub fn new(years: u32, months: u32) -> Result<Self, InvalidAge> {
        if months >= 12 {
            return Err(InvalidAge(months));
        }
        Ok(Self { years, months })
    }

    pub fn from_total_months(total: u32) -> Self {
        Self {
            years: total / 12,
            months: total % 12,
        }
    }

    pub fn years(&self) -> u32 {
        self.years
    }

    pub fn months(&self) -> u32 {
        self.months
    }

    pub fn total_months(&self) -> u32 {
        self.years * 12 + self.months
    }

    /// `years + months / 12`.
    pub fn fractional_years(&self) -> f64 {
        self.years as f64 + self.months as f64 / 12.0
    }

    /// Whole years, rounding six months and up to the next year.
    pub fn rounded_years(&self) -> u32 {
        self.years + u32::from(self.months >= 6)
    }
}

impl fmt::Display for AgeValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.months {
            0 => write!(f, "{}", self.years),
            m => write!(f, "{} {m}/12", self.years),
        }
    }
}

fn is_negative(token: &Token) -> bool {
    token
        .surface
        .trim_start_matches(['(', '[', '"', '\'', '„', '«'])
        .starts_with(['-', '−', '–'])
}

fn natural(s: &str) -> Option<u32> {
    if s.is_empty() || s.len() > 9 || !s.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    s.parse().ok()
}

fn as_int(token: &Token) -> Option<u32> {
    if is_negative(token) {
        return None;
    }
    natural(&token.normalized)
}

/// `N/12` with `N < 12`.
fn as_twelfths(token: &Token) -> Option<u32> {
    let (num, den) = token.normalized.split_once('/')?;
    if den != "12" {
        return None;
    }
    natural(num).filter(|&n| n < 12)
}

/// `Y.F` or `Y,F`; the fraction becomes months, rounded half up.
fn as_decimal(token: &Token) -> Option<AgeValue> {
    if is_negative(token) {
        return None;
    }
    let (int, frac) = token.normalized.split_once(['.', ','])?;
    let years = natural(int)?;
    let digits = natural(frac).map(|_| frac)?;
    let scale = 10u64.pow(digits.len() as u32);
    let numer: u64 = digits.parse().ok()?;
    let months = (numer * 24 + scale) / (2 * scale);
    Some(AgeValue::from_total_months(
        years.checked_mul(12)? + months as u32,
    ))
}

/// Try the three age productions at `pos`. Returns the age and the number
/// of tokens consumed.
///
/// 1. `INT [i] N/12` with `N < 12`
/// 2. a decimal number
/// 3. a bare `INT`
pub fn parse_age_at(tokens: &[Token], pos: usize) -> Option<(AgeValue, usize)> {
    let first = tokens.get(pos)?;
    if let Some(years) = as_int(first) {
        let mut next = pos + 1;
        if tokens.get(next).is_some_and(|t| t.normalized == "i") {
            next += 1;
        }
        if let Some(months) = tokens.get(next).and_then(as_twelfths) {
            return Some((AgeValue { years, months }, next + 1 - pos));
        }
        return Some((AgeValue { years, months: 0 }, 1));
    }
    as_decimal(first).map(|age| (age, 1))
}

/// First age expression in `tokens`, scanning left to right.
pub fn parse_age_expression(tokens: &[Token]) -> Option<AgeValue> {
    (0..tokens.len()).find_map(|i| parse_age_at(tokens, i).map(|(age, _)| age))
}

/// Age from the first six tokens of the first sentence. Matches above
/// `max_age` are skipped with a diagnostic.
pub fn extract_age(doc: &Document, max_age: AgeValue) -> Outcome<AgeValue> {
    if doc.is_empty() {
        return Outcome::new(
            None,
            vec![Diagnostic::new(
                &doc.id,
                DiagnosticCode::EmptyText,
                "no tokens",
            )],
        );
    }
    let first = doc.first_sentence();
    let window = &first[..first.len().min(AGE_WINDOW)];
    let mut diagnostics = Vec::new();
    for pos in 0..window.len() {
        let Some((age, _)) = parse_age_at(window, pos) else {
            continue;
        };
        if age <= max_age {
            return Outcome::new(Some(age), diagnostics);
        }
        diagnostics.push(Diagnostic::new(
            &doc.id,
            DiagnosticCode::AgeOutOfRange,
            format!("`{}` read as {age}, above {max_age}", window[pos].surface),
        ));
    }
    diagnostics.push(Diagnostic::new(
        &doc.id,
        DiagnosticCode::AgeWindowMiss,
        format!("no age expression in the first {AGE_WINDOW} tokens"),
    ));
    Outcome::new(None, diagnostics)
}
