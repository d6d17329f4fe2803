//! Reference segmenters and post-processors.
//!
//! Randomized baselines draw from ChaCha8 seeded with a `u64`, so a seed
//! reproduces the same labels on every platform. [`RNG_NAME`] is what
//! output metadata should record.

use std::fmt;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{DatasetRecord, ScoreEntry};
use crate::metrics::f1_from_counts;
use crate::types::{BoundaryLabels, Label, Level, ModelError, Transcript};

pub const RNG_NAME: &str = "chacha8";

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("{breaks} breaks requested but only {boundaries} boundaries exist")]
    TooManyBreaks { breaks: usize, boundaries: usize },
    #[error("{chapters} chapters requested for {sentences} sentences")]
    TooManyChapters { chapters: usize, sentences: usize },
    #[error("rule period must be at least 1")]
    ZeroPeriod,
    #[error("threshold {0} outside [0, 1]")]
    ThresholdRange(f64),
    #[error("paragraph rate {0} outside [0, 1]")]
    RateRange(f64),
    #[error("no documents")]
    EmptyCorpus,
    #[error("document {id}: {reason}")]
    Mismatch { id: String, reason: String },
    #[error("cue pattern {0:?} must be a single parenthesized expression")]
    BadCue(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Per-document seed derived from a run seed and a document id, so results
/// do not depend on corpus order.
pub fn document_seed(seed: u64, doc_id: &str) -> u64 {
    // FNV-1a over the id, mixed with the run seed.
    let hash = doc_id.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    });
    hash ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

fn binary_level(level: Level) -> Result<Label, BaselineError> {
    level
        .positive()
        .ok_or(BaselineError::Model(ModelError::InvalidProjectionTarget(level)))
}

/// `breaks` distinct positions drawn uniformly from the `m - 1` boundaries.
pub fn random_baseline(
    m: usize,
    breaks: usize,
    level: Level,
    seed: u64,
) -> Result<BoundaryLabels, BaselineError> {
    binary_level(level)?;
    let boundaries = m.saturating_sub(1);
    if breaks > boundaries {
        return Err(BaselineError::TooManyBreaks { breaks, boundaries });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positions = sample(&mut rng, boundaries, breaks);
    Ok(BoundaryLabels::from_positions("", level, m, positions)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct RulePeriod(usize);

impl RulePeriod {
    pub fn new(n: usize) -> Result<Self, BaselineError> {
        if n == 0 {
            return Err(BaselineError::ZeroPeriod);
        }
        Ok(Self(n))
    }

    pub fn get(self) -> usize {
        self.0
    }
}

impl TryFrom<usize> for RulePeriod {
    type Error = BaselineError;
    fn try_from(n: usize) -> Result<Self, Self::Error> {
        Self::new(n)
    }
}

impl From<RulePeriod> for usize {
    fn from(p: RulePeriod) -> usize {
        p.0
    }
}

impl fmt::Display for RulePeriod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Breaks after every `n`th sentence: positions `n - 1`, `2n - 1`, ...
/// strictly inside the document.
pub fn rule_baseline(m: usize, n: RulePeriod) -> BoundaryLabels {
    let positions = (1..)
        .map(|j| j * n.0 - 1)
        .take_while(|&p| p + 1 < m);
    BoundaryLabels::from_positions("", Level::Paragraph, m, positions)
        .expect("rule positions lie inside the document")
}

/// Mean sentences per paragraph over a corpus, and that mean rounded half
/// up as a rule period.
pub fn mean_paragraph_length(corpus: &[DatasetRecord]) -> Result<(f64, RulePeriod), BaselineError> {
    let (paragraphs, sentences) = corpus
        .iter()
        .flat_map(DatasetRecord::paragraph_lengths)
        .fold((0usize, 0usize), |(p, s), len| (p + 1, s + len));
    if paragraphs == 0 {
        return Err(BaselineError::EmptyCorpus);
    }
    let mean = sentences as f64 / paragraphs as f64;
    Ok((mean, rounded_period(mean)))
}

/// Rounds half up, with a floor of 1.
pub fn rounded_period(mean: f64) -> RulePeriod {
    RulePeriod(((mean + 0.5).floor() as usize).max(1))
}

/// Standalone paralinguistic cues such as `(Laughter)`.
#[derive(Debug, Clone)]
pub struct CueLexicon {
    patterns: Vec<String>,
    matcher: Regex,
}

impl Default for CueLexicon {
    fn default() -> Self {
        Self::new(["(Laughter)", "(Applause)", "(Music)", "(Cheering)"]).expect("default cues are valid")
    }
}

impl CueLexicon {
    /// Each pattern must look like `(Word ...)` with no nested parentheses.
    pub fn new<S: AsRef<str>>(patterns: impl IntoIterator<Item = S>) -> Result<Self, BaselineError> {
        let patterns: Vec<String> = patterns
            .into_iter()
            .map(|p| p.as_ref().trim().to_string())
            .collect();
        for p in &patterns {
            let inner = p.strip_prefix('(').and_then(|s| s.strip_suffix(')'));
            match inner {
                Some(inner) if !inner.trim().is_empty() && !inner.contains(['(', ')']) => {}
                _ => return Err(BaselineError::BadCue(p.clone())),
            }
        }
        let alternatives = if patterns.is_empty() {
            // Matches nothing.
            r"[^\s\S]".to_string()
        } else {
            patterns
                .iter()
                .map(|p| regex::escape(p))
                .collect::<Vec<_>>()
                .join("|")
        };
        let matcher = Regex::new(&format!(r"(?i)^\s*(?:(?:{alternatives})\s*)+$"))
            .expect("escaped patterns form a valid regex");
        Ok(Self { patterns, matcher })
    }

    /// One pattern per line; blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self, BaselineError> {
        Self::new(
            text.lines()
                .map(|l| l.split('#').next().unwrap_or("").trim())
                .filter(|l| !l.is_empty()),
        )
    }

    pub fn load(path: &Path) -> Result<Self, BaselineError> {
        let text = std::fs::read_to_string(path).map_err(|source| BaselineError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn patterns(&self) -> &[String] {
        &self.patterns
    }

    /// True when the whole sentence is one or more cues.
    pub fn is_cue(&self, sentence: &str) -> bool {
        self.matcher.is_match(sentence)
    }
}

/// Sets a paragraph break before and after every run of cue sentences.
/// Existing labels are kept, including chapter breaks.
pub fn apply_pbr(
    labels: &BoundaryLabels,
    transcript: &Transcript,
    lexicon: &CueLexicon,
) -> Result<BoundaryLabels, BaselineError> {
    let cues: Vec<bool> = transcript
        .sentences()
        .iter()
        .map(|s| lexicon.is_cue(&s.text))
        .collect();
    apply_pbr_mask(labels, &cues)
}

/// [`apply_pbr`] over a precomputed per-sentence cue mask.
pub fn apply_pbr_mask(labels: &BoundaryLabels, cues: &[bool]) -> Result<BoundaryLabels, BaselineError> {
    if labels.level() == Level::Chapter {
        return Err(ModelError::LevelAbsent {
            have: Level::Chapter,
            want: Level::Paragraph,
        }
        .into());
    }
    if cues.len() != labels.num_sentences() {
        return Err(BaselineError::Mismatch {
            id: labels.doc_id().to_string(),
            reason: format!(
                "{} labels for {} sentences",
                labels.num_boundaries(),
                cues.len()
            ),
        });
    }
    let mut out = labels.labels().to_vec();
    let mut mark = |position: usize| {
        if let Some(label @ Label::None) = out.get_mut(position) {
            *label = Label::Para;
        }
    };
    for i in 0..cues.len() {
        if !cues[i] {
            continue;
        }
        // First sentence of a run: break before it.
        if i > 0 && !cues[i - 1] {
            mark(i - 1);
        }
        // Last sentence of a run: break after it.
        if cues.get(i + 1) == Some(&false) {
            mark(i);
        }
    }
    Ok(BoundaryLabels::new(labels.doc_id(), labels.level(), out)?)
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Threshold(f64);

impl Threshold {
    pub fn new(tau: f64) -> Result<Self, BaselineError> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(BaselineError::ThresholdRange(tau));
        }
        Ok(Self(tau))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Threshold {
    type Error = BaselineError;
    fn try_from(tau: f64) -> Result<Self, Self::Error> {
        Self::new(tau)
    }
}

impl From<Threshold> for f64 {
    fn from(t: Threshold) -> f64 {
        t.0
    }
}

/// Break at every position whose score is at least `tau`.
pub fn apply_threshold(entry: &ScoreEntry, tau: Threshold) -> Result<BoundaryLabels, BaselineError> {
    binary_level(entry.level)?;
    let indicators: Vec<bool> = entry.scores.iter().map(|&s| s >= tau.0).collect();
    Ok(BoundaryLabels::from_indicators(&entry.id, entry.level, &indicators)?)
}

/// Result of [`tune_threshold`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TunedThreshold {
    pub tau: Threshold,
    /// Macro-averaged F1 at `tau`.
    pub f1: f64,
}

/// Macro F1 values closer than this count as tied during tuning.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Picks the threshold with the best macro F1 among every distinct score
/// and the endpoints 0 and 1. Ties go to the smallest threshold.
///
/// Each pair is a score entry and its gold labels, scored at the entry's
/// level.
pub fn tune_threshold(corpus: &[(ScoreEntry, BoundaryLabels)]) -> Result<TunedThreshold, BaselineError> {
    if corpus.is_empty() {
        return Err(BaselineError::EmptyCorpus);
    }
    // (score, document, gold) for every boundary, highest score first.
    let mut boundaries = Vec::new();
    let mut ref_pos = vec![0usize; corpus.len()];
    for (doc, (entry, gold)) in corpus.iter().enumerate() {
        binary_level(entry.level)?;
        let indicators = gold.indicators(entry.level)?;
        if indicators.len() != entry.scores.len() {
            return Err(BaselineError::Mismatch {
                id: entry.id.clone(),
                reason: format!(
                    "{} scores against {} gold boundaries",
                    entry.scores.len(),
                    indicators.len()
                ),
            });
        }
        for (&score, &positive) in entry.scores.iter().zip(&indicators) {
            boundaries.push((score, doc, positive));
            ref_pos[doc] += usize::from(positive);
        }
    }
    boundaries.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut candidates: Vec<f64> = boundaries.iter().map(|b| b.0).collect();
    candidates.extend([0.0, 1.0]);
    candidates.sort_by(|a, b| b.total_cmp(a));
    candidates.dedup();

    // Sweep thresholds downward, admitting boundaries as they clear tau.
    let mut tp = vec![0usize; corpus.len()];
    let mut hyp_pos = vec![0usize; corpus.len()];
    let mut next = 0;
    let mut best: Option<TunedThreshold> = None;
    for tau in candidates {
        while next < boundaries.len() && boundaries[next].0 >= tau {
            let (_, doc, positive) = boundaries[next];
            hyp_pos[doc] += 1;
            tp[doc] += usize::from(positive);
            next += 1;
        }
        let f1 = (0..corpus.len())
            .map(|d| f1_from_counts(tp[d], ref_pos[d], hyp_pos[d]).f1)
            .sum::<f64>()
            / corpus.len() as f64;
        // Later candidates are smaller, so they win ties.
        if best.is_none_or(|b| f1 >= b.f1 - TIE_TOLERANCE) {
            best = Some(TunedThreshold {
                tau: Threshold(tau),
                f1,
            });
        }
    }
    Ok(best.expect("candidate set contains 0 and 1"))
}

/// Random chapters with an oracle count, then random paragraphs inside
/// them at `paragraph_rate`.
///
/// `chapters` counts chapters, so `chapters - 1` seams are drawn.
/// Zero is treated as one chapter.
pub fn hierarchical_random(
    m: usize,
    chapters: usize,
    paragraph_rate: f64,
    seed: u64,
) -> Result<BoundaryLabels, BaselineError> {
    if !(0.0..=1.0).contains(&paragraph_rate) {
        return Err(BaselineError::RateRange(paragraph_rate));
    }
    if chapters > m.max(1) {
        return Err(BaselineError::TooManyChapters {
            chapters,
            sentences: m,
        });
    }
    let boundaries = m.saturating_sub(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels = vec![Label::None; boundaries];
    for seam in sample(&mut rng, boundaries, chapters.saturating_sub(1)) {
        labels[seam] = Label::Chap;
    }
    for label in labels.iter_mut().filter(|l| **l == Label::None) {
        if rng.random_bool(paragraph_rate) {
            *label = Label::Para;
        }
    }
    Ok(BoundaryLabels::new("", Level::Hierarchical, labels)?)
}
