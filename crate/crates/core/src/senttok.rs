//! Rule-based sentence boundary detection.
//!
//! A boundary is placed after a token that ends in terminal punctuation
//! (optionally followed by closing quotes or brackets) when the next token
//! starts with an uppercase letter, a digit, or an opening quote or bracket,
//! and the token is not a known abbreviation.
//! Parenthesized cues such as `(Laughter)` that open a sentence are closed off
//! as a sentence of their own. A paragraph delimiter always ends a sentence.
//!
//! Sentences are returned as trimmed slices of the input, so joining them
//! reproduces the input up to whitespace.

use std::collections::BTreeSet;
use std::ops::Range;

use thiserror::Error;

use crate::types::{is_paragraph_gap, Sentence};

const TERMINALS: &[char] = &['.', '!', '?', '…'];
const CLOSERS: &[char] = &['"', '\'', ')', ']', '”', '’', '»'];
const OPENERS: &[char] = &['"', '\'', '(', '[', '“', '‘', '«'];

const DEFAULT_ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "vs", "e.g", "i.e", "u.s", "u.k", "u.n",
    "a.m", "p.m", "inc", "ltd", "corp", "co", "mt", "ft", "approx", "dept", "fig", "gen", "gov",
    "lt", "col", "capt", "sgt", "rev", "jan", "feb", "mar", "apr", "jun", "jul", "aug", "sep",
    "sept", "oct", "nov", "dec", "ph.d", "cf", "al",
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AbbreviationError {
    #[error("abbreviation on line {line} contains whitespace: {entry:?}")]
    Whitespace { line: usize, entry: String },
}

/// Sentence-final punctuation: terminal characters plus the closing quotes
/// and brackets that may trail them (`."`, `?)`, ...).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PunctuationSet {
    terminals: &'static [char],
    closers: &'static [char],
}

impl Default for PunctuationSet {
    fn default() -> Self {
        Self::DEFAULT
    }
}

impl PunctuationSet {
    pub const DEFAULT: PunctuationSet = PunctuationSet {
        terminals: TERMINALS,
        closers: CLOSERS,
    };

    pub fn is_terminal(&self, c: char) -> bool {
        self.terminals.contains(&c)
    }

    /// The trailing punctuation run of `text` if it ends a sentence.
    pub fn ending<'a>(&self, text: &'a str) -> Option<&'a str> {
        let without_closers = text.trim_end_matches(|c| self.closers.contains(&c));
        let stem = without_closers.trim_end_matches(|c| self.terminals.contains(&c));
        (stem.len() < without_closers.len()).then(|| &text[stem.len()..])
    }
}

/// The sentence-final punctuation run of `text` under the default set.
pub fn terminal_ending(text: &str) -> Option<&str> {
    PunctuationSet::DEFAULT.ending(text)
}

/// Lowercase abbreviations without their final period (`"dr"`, `"e.g"`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbbreviationList(BTreeSet<String>);

impl Default for AbbreviationList {
    fn default() -> Self {
        Self(DEFAULT_ABBREVIATIONS.iter().map(|s| s.to_string()).collect())
    }
}

impl AbbreviationList {
    pub fn empty() -> Self {
        Self(BTreeSet::new())
    }

    /// Parses a config file: one abbreviation per line, `#` starts a comment.
    pub fn parse(config: &str) -> Result<Self, AbbreviationError> {
        let mut entries = BTreeSet::new();
        for (i, line) in config.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if line.chars().any(char::is_whitespace) {
                return Err(AbbreviationError::Whitespace {
                    line: i + 1,
                    entry: line.to_string(),
                });
            }
            entries.insert(line.trim_end_matches('.').to_lowercase());
        }
        Ok(Self(entries))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(&word.to_lowercase())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, Default)]
pub struct Tokenizer {
    punctuation: PunctuationSet,
    abbreviations: AbbreviationList,
}

impl Tokenizer {
    pub fn new(abbreviations: AbbreviationList) -> Self {
        Self {
            punctuation: PunctuationSet::default(),
            abbreviations,
        }
    }

    pub fn tokenize(&self, text: &str) -> Vec<Sentence> {
        self.sentence_spans(text)
            .into_iter()
            .enumerate()
            .map(|(i, span)| {
                Sentence::new(&text[span], i).expect("spans are trimmed and delimiter free")
            })
            .collect()
    }

    /// Byte ranges of the sentences in `text`.
    pub fn sentence_spans(&self, text: &str) -> Vec<Range<usize>> {
        let tokens = whitespace_tokens(text);
        let mut spans = Vec::new();
        let Some(first) = tokens.first() else {
            return spans;
        };
        let mut sentence_start = 0;
        let mut start_byte = first.start;
        let mut j = 0;
        while j < tokens.len() {
            let mut last = j;
            let mut ends = false;
            if j == sentence_start {
                if let Some(end) = self.cue_group(text, &tokens, j) {
                    last = end;
                    ends = tokens
                        .get(end + 1)
                        .is_some_and(|next| starts_sentence(&text[next.clone()]));
                }
            }
            if let Some(next) = tokens.get(last + 1) {
                let gap = &text[tokens[last].end..next.start];
                ends = ends
                    || is_paragraph_gap(gap)
                    || (self.ends_sentence(&text[tokens[last].clone()])
                        && starts_sentence(&text[next.clone()]));
                if ends {
                    spans.push(start_byte..tokens[last].end);
                    sentence_start = last + 1;
                    start_byte = next.start;
                }
            }
            j = last + 1;
        }
        spans.push(start_byte..tokens[tokens.len() - 1].end);
        spans
    }

    fn ends_sentence(&self, token: &str) -> bool {
        let Some(ending) = self.punctuation.ending(token) else {
            return false;
        };
        let punct = ending.trim_end_matches(CLOSERS);
        if punct != "." {
            return true;
        }
        let word = token[..token.len() - ending.len()].trim_start_matches(OPENERS);
        !self.abbreviations.contains(word)
    }

    /// Index of the last token of a parenthesized cue starting at token `j`.
    fn cue_group(&self, text: &str, tokens: &[Range<usize>], j: usize) -> Option<usize> {
        const MAX_CUE_TOKENS: usize = 4;
        if !text[tokens[j].clone()].starts_with('(') {
            return None;
        }
        let end = (j..tokens.len().min(j + MAX_CUE_TOKENS))
            .find(|&k| text[tokens[k].clone()].trim_end_matches(TERMINALS).ends_with(')'))?;
        let crosses_paragraph =
            (j..end).any(|k| is_paragraph_gap(&text[tokens[k].end..tokens[k + 1].start]));
        let group = &text[tokens[j].start..tokens[end].end];
        (!crosses_paragraph && is_cue(group)).then_some(end)
    }
}

/// Splits `text` into sentences with the default rules.
pub fn tokenize_sentences(text: &str) -> Vec<Sentence> {
    Tokenizer::default().tokenize(text)
}

/// Whether `text` is a parenthesized cue like `(Laughter)` or `(Audience cheers).`
pub fn is_cue(text: &str) -> bool {
    let body = text.trim_end_matches(TERMINALS);
    let Some(inner) = body.strip_prefix('(').and_then(|b| b.strip_suffix(')')) else {
        return false;
    };
    inner.chars().next().is_some_and(char::is_uppercase)
        && inner
            .chars()
            .all(|c| c.is_alphabetic() || c == ' ' || c == '\'' || c == '-')
}

fn starts_sentence(token: &str) -> bool {
    token
        .chars()
        .next()
        .is_some_and(|c| c.is_uppercase() || c.is_ascii_digit() || OPENERS.contains(&c))
}

fn whitespace_tokens(text: &str) -> Vec<Range<usize>> {
    let mut tokens = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        match (c.is_whitespace(), start) {
            (true, Some(s)) => {
                tokens.push(s..i);
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        tokens.push(s..text.len());
    }
    tokens
}
