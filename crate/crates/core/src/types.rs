//! Shared data model: transcripts, sentences and boundary labels.
//!
//! A boundary sits between sentence `i` and sentence `i + 1` and is addressed
//! by position `i` (0-based). A transcript with `m` sentences has `m - 1`
//! boundaries. Every module in the crate uses this convention.

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::senttok::{self, Tokenizer};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("labels at level {have} carry no {want} boundaries")]
    LevelAbsent { have: Level, want: Level },
    #[error("label {label} not allowed at level {level} (position {position})")]
    InvalidLabel {
        level: Level,
        position: usize,
        label: Label,
    },
    #[error("boundary position {position} out of range for {sentences} sentences")]
    PositionOutOfRange { position: usize, sentences: usize },
    #[error("mass sequence must be non-empty with positive entries")]
    InvalidMasses,
    #[error("projection target must be paragraph or chapter, got {0}")]
    InvalidProjectionTarget(Level),
    #[error("sentence {index} is empty or carries surrounding whitespace")]
    BadSentence { index: usize },
    #[error("sentence {index} contains a paragraph delimiter")]
    DelimiterInSentence { index: usize },
    #[error("expected {expected} boundary labels, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("chapter ranges must be non-empty, contiguous and cover all {sentences} sentences")]
    BadChapters { sentences: usize },
    #[error("chapter starting at sentence {start} has no break in the gold labels")]
    ChapterWithoutBreak { start: usize },
}

/// Label of one boundary.
///
/// Serialized as `0`, `1`, `2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Label {
    #[default]
    None,
    Para,
    Chap,
}

impl From<Label> for u8 {
    fn from(label: Label) -> u8 {
        match label {
            Label::None => 0,
            Label::Para => 1,
            Label::Chap => 2,
        }
    }
}

impl TryFrom<u8> for Label {
    type Error = String;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        match value {
            0 => Ok(Label::None),
            1 => Ok(Label::Para),
            2 => Ok(Label::Chap),
            other => Err(format!("invalid boundary label {other}")),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::None => "NONE",
            Label::Para => "PARA",
            Label::Chap => "CHAP",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Paragraph,
    Chapter,
    Hierarchical,
}

impl Level {
    /// The positive label a binary vector at this level uses.
    pub fn positive(self) -> Option<Label> {
        match self {
            Level::Paragraph => Some(Label::Para),
            Level::Chapter => Some(Label::Chap),
            Level::Hierarchical => None,
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Level::Paragraph => "paragraph",
            Level::Chapter => "chapter",
            Level::Hierarchical => "hierarchical",
        })
    }
}

impl std::str::FromStr for Level {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "paragraph" => Ok(Level::Paragraph),
            "chapter" => Ok(Level::Chapter),
            "hierarchical" => Ok(Level::Hierarchical),
            other => Err(format!("unknown level `{other}`")),
        }
    }
}

#[derive(Deserialize)]
struct RawLabels {
    doc_id: String,
    level: Level,
    labels: Vec<Label>,
}

impl TryFrom<RawLabels> for BoundaryLabels {
    type Error = ModelError;

    fn try_from(raw: RawLabels) -> Result<Self, Self::Error> {
        BoundaryLabels::new(raw.doc_id, raw.level, raw.labels)
    }
}

/// A segmentation of one document: one label per sentence boundary.
///
/// Binary levels (`paragraph`, `chapter`) only use `NONE` and their own
/// positive label. Hierarchical vectors use all three, and a `CHAP` boundary
/// counts as a paragraph break when projected.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawLabels")]
pub struct BoundaryLabels {
    doc_id: String,
    level: Level,
    labels: Vec<Label>,
}

impl BoundaryLabels {
    pub fn new(
        doc_id: impl Into<String>,
        level: Level,
        labels: Vec<Label>,
    ) -> Result<Self, ModelError> {
        if let Some(positive) = level.positive() {
            if let Some((position, &label)) = labels
                .iter()
                .enumerate()
                .find(|(_, l)| **l != Label::None && **l != positive)
            {
                return Err(ModelError::InvalidLabel {
                    level,
                    position,
                    label,
                });
            }
        }
        Ok(Self {
            doc_id: doc_id.into(),
            level,
            labels,
        })
    }

    /// Binary labels for `sentences` sentences with breaks at `positions`.
    pub fn from_positions(
        doc_id: impl Into<String>,
        level: Level,
        sentences: usize,
        positions: impl IntoIterator<Item = usize>,
    ) -> Result<Self, ModelError> {
        let positive = level
            .positive()
            .ok_or(ModelError::InvalidProjectionTarget(level))?;
        let mut labels = vec![Label::None; sentences.saturating_sub(1)];
        for position in positions {
            let slot = labels
                .get_mut(position)
                .ok_or(ModelError::PositionOutOfRange {
                    position,
                    sentences,
                })?;
            *slot = positive;
        }
        Self::new(doc_id, level, labels)
    }

    /// Binary labels from boolean indicators, one per boundary.
    pub fn from_indicators(
        doc_id: impl Into<String>,
        level: Level,
        indicators: &[bool],
    ) -> Result<Self, ModelError> {
        let positions = indicators
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i));
        Self::from_positions(doc_id, level, indicators.len() + 1, positions)
    }

    /// Inverse of [`labels_to_masses`] for a binary level.
    pub fn from_masses(
        doc_id: impl Into<String>,
        level: Level,
        masses: &[usize],
    ) -> Result<Self, ModelError> {
        if masses.is_empty() || masses.contains(&0) {
            return Err(ModelError::InvalidMasses);
        }
        let total: usize = masses.iter().sum();
        let positions = masses
            .iter()
            .take(masses.len() - 1)
            .scan(0usize, |acc, &mass| {
                *acc += mass;
                Some(*acc - 1)
            });
        Self::from_positions(doc_id, level, total, positions)
    }

    pub fn doc_id(&self) -> &str {
        &self.doc_id
    }

    pub fn level(&self) -> Level {
        self.level
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn into_labels(self) -> Vec<Label> {
        self.labels
    }

    pub fn num_boundaries(&self) -> usize {
        self.labels.len()
    }

    pub fn num_sentences(&self) -> usize {
        self.labels.len() + 1
    }

    pub fn with_doc_id(mut self, doc_id: impl Into<String>) -> Self {
        self.doc_id = doc_id.into();
        self
    }

    /// Whether breaks at `level` can be read from these labels.
    pub fn has_level(&self, level: Level) -> bool {
        self.level == level || self.level == Level::Hierarchical && level != Level::Hierarchical
    }

    /// Whether boundary `position` is a break at `level`.
    fn is_break(label: Label, level: Level) -> bool {
        match level {
            Level::Paragraph => matches!(label, Label::Para | Label::Chap),
            Level::Chapter => label == Label::Chap,
            Level::Hierarchical => label != Label::None,
        }
    }

    /// Boolean break indicators at `level`.
    pub fn indicators(&self, level: Level) -> Result<Vec<bool>, ModelError> {
        if !self.has_level(level) {
            return Err(ModelError::LevelAbsent {
                have: self.level,
                want: level,
            });
        }
        Ok(self
            .labels
            .iter()
            .map(|&l| Self::is_break(l, level))
            .collect())
    }

    /// Positions of breaks at `level`, ascending.
    pub fn positions(&self, level: Level) -> Result<Vec<usize>, ModelError> {
        Ok(self
            .indicators(level)?
            .into_iter()
            .enumerate()
            .filter_map(|(i, b)| b.then_some(i))
            .collect())
    }

    pub fn count(&self, level: Level) -> Result<usize, ModelError> {
        Ok(self.indicators(level)?.into_iter().filter(|&b| b).count())
    }

    pub fn masses(&self, level: Level) -> Result<Vec<usize>, ModelError> {
        labels_to_masses(self, level)
    }

    pub fn project(&self, target: Level) -> Result<BoundaryLabels, ModelError> {
        project_hierarchical(self, target)
    }
}

/// Segment lengths (in sentences) of the segmentation at `level`.
///
/// The masses always sum to the number of sentences.
pub fn labels_to_masses(labels: &BoundaryLabels, level: Level) -> Result<Vec<usize>, ModelError> {
    let mut masses = Vec::new();
    let mut current = 1;
    for is_break in labels.indicators(level)? {
        if is_break {
            masses.push(current);
            current = 1;
        } else {
            current += 1;
        }
    }
    masses.push(current);
    Ok(masses)
}

/// Binary view of hierarchical labels.
///
/// `chapter` keeps only `CHAP`; `paragraph` turns both `PARA` and `CHAP` into
/// paragraph breaks.
pub fn project_hierarchical(
    labels: &BoundaryLabels,
    target: Level,
) -> Result<BoundaryLabels, ModelError> {
    if labels.level != Level::Hierarchical {
        return Err(ModelError::LevelAbsent {
            have: labels.level,
            want: Level::Hierarchical,
        });
    }
    let projected = match target {
        Level::Paragraph => labels
            .labels
            .iter()
            .map(|l| match l {
                Label::None => Label::None,
                Label::Para | Label::Chap => Label::Para,
            })
            .collect(),
        Level::Chapter => labels
            .labels
            .iter()
            .map(|l| match l {
                Label::Chap => Label::Chap,
                _ => Label::None,
            })
            .collect(),
        Level::Hierarchical => return Err(ModelError::InvalidProjectionTarget(target)),
    };
    BoundaryLabels::new(labels.doc_id.clone(), target, projected)
}

/// Collapses every whitespace run to one space and trims both ends.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// A whitespace run that reads as a paragraph delimiter (two or more newlines).
pub fn is_paragraph_gap(whitespace: &str) -> bool {
    whitespace.chars().filter(|&c| c == '\n').count() >= 2
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub text: String,
    pub index: usize,
    pub final_punct: Option<char>,
}

impl Sentence {
    pub fn new(text: impl Into<String>, index: usize) -> Result<Self, ModelError> {
        let text = text.into();
        if text.is_empty() || text.trim() != text {
            return Err(ModelError::BadSentence { index });
        }
        if text
            .split(|c: char| !c.is_whitespace())
            .any(is_paragraph_gap)
        {
            return Err(ModelError::DelimiterInSentence { index });
        }
        let final_punct = senttok::terminal_ending(&text).and_then(|e| e.chars().last());
        Ok(Self {
            text,
            index,
            final_punct,
        })
    }

    /// The sentence-final punctuation run, e.g. `"."` or `"?\""`.
    pub fn ending(&self) -> Option<&str> {
        senttok::terminal_ending(&self.text)
    }

    /// The sentence text without its final punctuation run.
    pub fn stem(&self) -> &str {
        match self.ending() {
            Some(ending) => &self.text[..self.text.len() - ending.len()],
            None => &self.text,
        }
    }
}

/// Verbatim transcript text plus its sentence tokenization.
///
/// Sentences are exact, ordered substrings of `text` separated only by
/// whitespace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transcript {
    id: String,
    text: String,
    sentences: Vec<Sentence>,
    spans: Vec<Range<usize>>,
}

impl Transcript {
    /// Tokenizes `text` with the default sentence splitter.
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self::with_tokenizer(id, text, &Tokenizer::default())
    }

    pub fn with_tokenizer(
        id: impl Into<String>,
        text: impl Into<String>,
        tokenizer: &Tokenizer,
    ) -> Self {
        let text = text.into();
        let spans = tokenizer.sentence_spans(&text);
        let sentences = spans
            .iter()
            .enumerate()
            .map(|(index, span)| {
                Sentence::new(&text[span.clone()], index)
                    .expect("tokenizer spans are trimmed and delimiter free")
            })
            .collect();
        Self {
            id: id.into(),
            text,
            sentences,
            spans,
        }
    }

    /// Builds a transcript from pre-tokenized sentences joined by single spaces.
    pub fn from_sentences<S: AsRef<str>>(
        id: impl Into<String>,
        sentences: &[S],
    ) -> Result<Self, ModelError> {
        let mut text = String::new();
        let mut spans = Vec::with_capacity(sentences.len());
        let mut parsed = Vec::with_capacity(sentences.len());
        for (index, s) in sentences.iter().enumerate() {
            let sentence = Sentence::new(s.as_ref(), index)?;
            if index > 0 {
                text.push(' ');
            }
            let start = text.len();
            text.push_str(&sentence.text);
            spans.push(start..text.len());
            parsed.push(sentence);
        }
        Ok(Self {
            id: id.into(),
            text,
            sentences: parsed,
            spans,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn sentences(&self) -> &[Sentence] {
        &self.sentences
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    /// Byte range of sentence `index` inside [`Transcript::text`].
    pub fn span(&self, index: usize) -> Range<usize> {
        self.spans[index].clone()
    }

    /// The original whitespace between sentence `boundary` and the next one.
    pub fn gap(&self, boundary: usize) -> &str {
        &self.text[self.spans[boundary].end..self.spans[boundary + 1].start]
    }

    /// The text from the first to the last sentence, without outer whitespace.
    pub fn trimmed_text(&self) -> &str {
        match (self.spans.first(), self.spans.last()) {
            (Some(first), Some(last)) => &self.text[first.start..last.end],
            _ => "",
        }
    }

    /// Sub-transcript over a contiguous sentence range, re-indexed from 0.
    pub fn slice(&self, range: Range<usize>) -> Transcript {
        let base = self.spans[range.start].start;
        let end = self.spans[range.end - 1].end;
        let spans: Vec<_> = self.spans[range.clone()]
            .iter()
            .map(|s| s.start - base..s.end - base)
            .collect();
        let sentences = self.sentences[range]
            .iter()
            .enumerate()
            .map(|(index, s)| Sentence {
                index,
                ..s.clone()
            })
            .collect();
        Transcript {
            id: self.id.clone(),
            text: self.text[base..end].to_string(),
            sentences,
            spans,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chapter {
    pub title: Option<String>,
    pub sentences: Range<usize>,
}

/// A transcript with optional gold labels and optional chapter structure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentedDocument {
    transcript: Transcript,
    gold: Option<BoundaryLabels>,
    chapters: Option<Vec<Chapter>>,
}

impl SegmentedDocument {
    pub fn new(
        transcript: Transcript,
        gold: Option<BoundaryLabels>,
        chapters: Option<Vec<Chapter>>,
    ) -> Result<Self, ModelError> {
        let m = transcript.len();
        if let Some(gold) = &gold {
            if gold.num_boundaries() != m.saturating_sub(1) {
                return Err(ModelError::LengthMismatch {
                    expected: m.saturating_sub(1),
                    found: gold.num_boundaries(),
                });
            }
        }
        if let Some(chapters) = &chapters {
            let mut cursor = 0;
            for chapter in chapters {
                if chapter.sentences.start != cursor || chapter.sentences.is_empty() {
                    return Err(ModelError::BadChapters { sentences: m });
                }
                cursor = chapter.sentences.end;
            }
            if cursor != m {
                return Err(ModelError::BadChapters { sentences: m });
            }
            if let Some(gold) = &gold {
                let level = match gold.level() {
                    Level::Chapter => Level::Chapter,
                    _ => Level::Paragraph,
                };
                let breaks = gold.indicators(level)?;
                for chapter in chapters.iter().skip(1) {
                    if !breaks[chapter.sentences.start - 1] {
                        return Err(ModelError::ChapterWithoutBreak {
                            start: chapter.sentences.start,
                        });
                    }
                }
            }
        }
        Ok(Self {
            transcript,
            gold,
            chapters,
        })
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn gold(&self) -> Option<&BoundaryLabels> {
        self.gold.as_ref()
    }

    pub fn chapters(&self) -> Option<&[Chapter]> {
        self.chapters.as_deref()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn para(m: usize, positions: &[usize]) -> BoundaryLabels {
        BoundaryLabels::from_positions("d", Level::Paragraph, m, positions.iter().copied()).unwrap()
    }

    fn hier(labels: &[u8]) -> BoundaryLabels {
        let labels = labels.iter().map(|&l| Label::try_from(l).unwrap()).collect();
        BoundaryLabels::new("d", Level::Hierarchical, labels).unwrap()
    }

    #[test]
    fn masses_from_breaks() {
        assert_eq!(labels_to_masses(&para(5, &[1, 3]), Level::Paragraph).unwrap(), vec![2, 2, 1]);
        assert_eq!(labels_to_masses(&para(4, &[]), Level::Paragraph).unwrap(), vec![4]);
        assert_eq!(labels_to_masses(&para(1, &[]), Level::Paragraph).unwrap(), vec![1]);
    }

    #[test]
    fn masses_for_missing_level_is_an_error() {
        let err = labels_to_masses(&para(3, &[0]), Level::Chapter).unwrap_err();
        assert!(matches!(err, ModelError::LevelAbsent { .. }));
    }

    #[test]
    fn projection_rule() {
        let labels = hier(&[0, 1, 2]);
        let p = project_hierarchical(&labels, Level::Paragraph).unwrap();
        assert_eq!(p.indicators(Level::Paragraph).unwrap(), vec![false, true, true]);
        let c = project_hierarchical(&labels, Level::Chapter).unwrap();
        assert_eq!(c.indicators(Level::Chapter).unwrap(), vec![false, false, true]);

        let none = hier(&[0, 0, 0]);
        for target in [Level::Paragraph, Level::Chapter] {
            let projected = none.project(target).unwrap();
            assert_eq!(projected.count(target).unwrap(), 0);
        }
    }

    #[test]
    fn projection_requires_hierarchical_input() {
        assert!(para(3, &[1]).project(Level::Chapter).is_err());
        assert!(hier(&[1]).project(Level::Hierarchical).is_err());
    }

    #[test]
    fn binary_levels_reject_foreign_labels() {
        let err = BoundaryLabels::new("d", Level::Paragraph, vec![Label::Chap]).unwrap_err();
        assert!(matches!(err, ModelError::InvalidLabel { position: 0, .. }));
    }

    #[test]
    fn labels_serialize_as_integers() {
        let json = serde_json::to_string(&hier(&[0, 1, 2])).unwrap();
        assert_eq!(json, r#"{"doc_id":"d","level":"hierarchical","labels":[0,1,2]}"#);
        let bad = r#"{"doc_id":"d","level":"paragraph","labels":[2]}"#;
        assert!(serde_json::from_str::<BoundaryLabels>(bad).is_err());
    }

    #[test]
    fn transcript_from_sentences_keeps_spans() {
        let t = Transcript::from_sentences("x", &["Hello there.", "How are you?"]).unwrap();
        assert_eq!(t.text(), "Hello there. How are you?");
        assert_eq!(t.gap(0), " ");
        assert_eq!(t.sentences()[1].final_punct, Some('?'));
        assert_eq!(t.sentences()[1].stem(), "How are you");
        assert!(Transcript::from_sentences("x", &[" padded"]).is_err());
        assert!(Transcript::from_sentences("x", &["a\n\nb"]).is_err());
    }

    #[test]
    fn slice_reindexes() {
        let t = Transcript::from_sentences("x", &["A.", "B.", "C."]).unwrap();
        let s = t.slice(1..3);
        assert_eq!(s.text(), "B. C.");
        assert_eq!(s.sentences()[0].index, 0);
        assert_eq!(s.gap(0), " ");
    }

    #[test]
    fn chapters_must_tile_the_transcript() {
        let t = Transcript::from_sentences("x", &["A.", "B.", "C."]).unwrap();
        let ch = |r: Range<usize>| Chapter { title: None, sentences: r };
        assert!(SegmentedDocument::new(t.clone(), None, Some(vec![ch(0..1), ch(1..3)])).is_ok());
        assert!(SegmentedDocument::new(t.clone(), None, Some(vec![ch(0..1), ch(2..3)])).is_err());
        assert!(SegmentedDocument::new(t.clone(), None, Some(vec![ch(0..2)])).is_err());

        let gold = hier(&[0, 1]);
        let err = SegmentedDocument::new(t.clone(), Some(gold), Some(vec![ch(0..1), ch(1..3)]));
        assert!(matches!(err, Err(ModelError::ChapterWithoutBreak { start: 1 })));
        let gold = hier(&[2, 0]);
        assert!(SegmentedDocument::new(t, Some(gold), Some(vec![ch(0..1), ch(1..3)])).is_ok());
    }

    proptest! {
        #[test]
        fn masses_round_trip(indicators in proptest::collection::vec(any::<bool>(), 0..40)) {
            let labels = BoundaryLabels::from_indicators("d", Level::Paragraph, &indicators).unwrap();
            let masses = labels.masses(Level::Paragraph).unwrap();
            prop_assert_eq!(masses.iter().sum::<usize>(), indicators.len() + 1);
            prop_assert_eq!(masses.len(), indicators.iter().filter(|&&b| b).count() + 1);
            let back = BoundaryLabels::from_masses("d", Level::Paragraph, &masses).unwrap();
            prop_assert_eq!(back, labels);
        }

        #[test]
        fn chapter_breaks_are_paragraph_breaks(raw in proptest::collection::vec(0u8..3, 0..40)) {
            let labels = hier(&raw);
            let chapter = labels.positions(Level::Chapter).unwrap();
            let paragraph = labels.positions(Level::Paragraph).unwrap();
            prop_assert!(chapter.iter().all(|p| paragraph.contains(p)));
        }
    }
}
