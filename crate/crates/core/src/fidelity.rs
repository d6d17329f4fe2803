//! How far a formatted output drifted from its source transcript.
//!
//! Four progressively relaxed levels are checked, each passing whenever the
//! stricter one does:
//!
//! 1. exact: identical up to paragraph breaks,
//! 2. whitespace: identical after collapsing whitespace,
//! 3. punct/case: identical after also dropping punctuation (Unicode `P*`)
//!    and lowercasing,
//! 4. length: whitespace-normalized character counts within 5%.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{is_paragraph_gap, normalize_whitespace};

static PUNCTUATION: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\p{P}").unwrap());

/// Allowed relative length deviation at the loosest level.
pub const LENGTH_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FidelityError {
    #[error("source text is empty")]
    EmptySource,
    #[error("no documents to aggregate")]
    EmptyCorpus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub exact: bool,
    pub whitespace: bool,
    pub punct_case: bool,
    pub length_5pct: bool,
    /// Output length over source length, in whitespace-normalized characters.
    pub length_ratio: f64,
}

impl FidelityReport {
    pub fn levels(&self) -> [bool; 4] {
        [self.exact, self.whitespace, self.punct_case, self.length_5pct]
    }
}

/// Alternating runs of whitespace and non-whitespace.
fn runs(text: &str) -> Vec<(bool, &str)> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut current = None;
    for (i, c) in text.char_indices() {
        let ws = c.is_whitespace();
        if current.is_some_and(|w| w != ws) {
            out.push((current.unwrap(), &text[start..i]));
            start = i;
        }
        current = Some(ws);
    }
    if let Some(ws) = current {
        out.push((ws, &text[start..]));
    }
    out
}

/// Equal up to paragraph breaks: every whitespace run must match unless one
/// side is a paragraph delimiter.
fn equal_ignoring_breaks(source: &str, output: &str) -> bool {
    let (a, b) = (runs(source.trim()), runs(output.trim()));
    a.len() == b.len()
        && a.iter().zip(&b).all(|(&(ws_a, x), &(ws_b, y))| {
            ws_a == ws_b && (x == y || ws_a && (is_paragraph_gap(x) || is_paragraph_gap(y)))
        })
}

fn strip_punct_case(text: &str) -> String {
    normalize_whitespace(&PUNCTUATION.replace_all(text, "").to_lowercase())
}

pub fn check_fidelity(source: &str, output: &str) -> Result<FidelityReport, FidelityError> {
    let source_norm = normalize_whitespace(source);
    if source_norm.is_empty() {
        return Err(FidelityError::EmptySource);
    }
    let output_norm = normalize_whitespace(output);
    let source_len = source_norm.chars().count();
    let output_len = output_norm.chars().count();
    let length_ratio = output_len as f64 / source_len as f64;

    let exact = equal_ignoring_breaks(source, output);
    let whitespace = exact || source_norm == output_norm;
    let punct_case = whitespace || strip_punct_case(&source_norm) == strip_punct_case(&output_norm);
    let length_5pct =
        punct_case || (output_len as f64 - source_len as f64).abs() <= LENGTH_TOLERANCE * source_len as f64;
    Ok(FidelityReport {
        exact,
        whitespace,
        punct_case,
        length_5pct,
        length_ratio,
    })
}

/// Share of documents passing each level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidelityRow {
    pub documents: usize,
    pub exact: f64,
    pub whitespace: f64,
    pub punct_case: f64,
    pub length_5pct: f64,
}

pub fn fidelity_table(reports: &[FidelityReport]) -> Result<FidelityRow, FidelityError> {
    if reports.is_empty() {
        return Err(FidelityError::EmptyCorpus);
    }
    let n = reports.len() as f64;
    let share = |level: usize| reports.iter().filter(|r| r.levels()[level]).count() as f64 / n;
    Ok(FidelityRow {
        documents: reports.len(),
        exact: share(0),
        whitespace: share(1),
        punct_case: share(2),
        length_5pct: share(3),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn delimiter_only_change_passes_everything() {
        let r = check_fidelity("A. B.", "A.\n\nB.").unwrap();
        assert_eq!(r.levels(), [true; 4]);
    }

    #[test]
    fn case_and_punctuation_relaxation() {
        let r = check_fidelity("A. B.", "a b").unwrap();
        assert!(!r.exact);
        assert!(!r.whitespace);
        assert!(r.punct_case);
        assert!(r.length_5pct);
    }

    #[test]
    fn whitespace_relaxation() {
        let r = check_fidelity("one two", "one   two").unwrap();
        assert_eq!(r.levels(), [false, true, true, true]);
        // A paragraph break on the source side is ignored too.
        let r = check_fidelity("one.\n\ntwo.", "one. two.").unwrap();
        assert!(r.exact);
    }

    #[test]
    fn missing_tenth_fails_all_levels() {
        let source = "abcdefghij".repeat(10);
        let output = &source[..90];
        let r = check_fidelity(&source, output).unwrap();
        assert_eq!(r.levels(), [false; 4]);
        assert!((r.length_ratio - 0.9).abs() < 1e-12);
    }

    #[test]
    fn small_length_change_passes_only_length() {
        let source = "abcdefghij".repeat(10);
        let output = format!("{}xyz", &source[..99]);
        let r = check_fidelity(&source, &output).unwrap();
        assert_eq!(r.levels(), [false, false, false, true]);
    }

    #[test]
    fn empty_source_is_an_error() {
        assert_eq!(check_fidelity("  ", "x"), Err(FidelityError::EmptySource));
    }

    #[test]
    fn table_proportions() {
        let perfect = fidelity_table(&[check_fidelity("A.", "A.").unwrap(); 3]).unwrap();
        assert_eq!(
            (perfect.exact, perfect.whitespace, perfect.punct_case, perfect.length_5pct),
            (1.0, 1.0, 1.0, 1.0)
        );

        let source = "abcdefghij".repeat(10);
        let reports = [
            check_fidelity("A. B.", "A.\n\nB.").unwrap(),
            check_fidelity("A. B.", "a b").unwrap(),
            check_fidelity(&source, &source[..90]).unwrap(),
        ];
        let row = fidelity_table(&reports).unwrap();
        assert_eq!(
            (row.exact, row.whitespace, row.punct_case, row.length_5pct),
            (1.0 / 3.0, 1.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0)
        );
        assert_eq!(fidelity_table(&[]), Err(FidelityError::EmptyCorpus));
    }

    proptest! {
        #[test]
        fn inserted_delimiters_pass_every_level(
            words in proptest::collection::vec("[A-Za-z,.!?']{1,8}", 1..30),
            breaks in proptest::collection::vec(any::<bool>(), 30),
        ) {
            let source = words.join(" ");
            let mut output = words[0].clone();
            for (i, w) in words.iter().enumerate().skip(1) {
                output.push_str(if breaks[i] { "\n\n" } else { " " });
                output.push_str(w);
            }
            let r = check_fidelity(&source, &output).unwrap();
            prop_assert_eq!(r.levels(), [true; 4]);
        }

        #[test]
        fn levels_are_monotone(source in "[a-zA-Z .,\n]{1,40}", output in "[a-zA-Z .,\n]{0,40}") {
            prop_assume!(!source.trim().is_empty());
            let r = check_fidelity(&source, &output).unwrap();
            let l = r.levels();
            prop_assert!(l.windows(2).all(|w| !w[0] || w[1]));
        }
    }
}
