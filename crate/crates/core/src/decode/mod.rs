//! Sentence-wise constrained decoding for paragraph insertion.
//!
//! At every sentence boundary the decoder holds the partially formatted
//! output, strips the sentence-final punctuation `p` from it, and asks the
//! model to score two kinds of continuation: `p` itself ("continue") and `p`
//! followed by the paragraph delimiter ("break"). It breaks only when the best
//! break candidate scores strictly higher than `p`, then copies the next
//! sentence verbatim. The model never produces transcript text, so the output
//! equals the source up to paragraph breaks.
//!
//! One scoring query is issued per boundary, i.e. `m - 1` queries for a
//! transcript of `m` sentences.

mod http;
mod lm;
mod mock;
mod prompt;

use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{is_paragraph_gap, BoundaryLabels, Label, Level, ModelError, SegmentedDocument, Transcript};

pub use http::HttpLm;
pub use lm::{
    CountingLm, GenerateRequest, GenerateResponse, LanguageModel, LmError, ScoreRequest,
    ScoreResponse,
};
pub use mock::{BoundaryScript, MockDecision, RandomLm, ScriptedLm};
pub use prompt::{
    build_prompt, ChatMessage, PromptTemplate, Role, TemplateError, INPUT_PLACEHOLDER,
    PARAGRAPH_DELIMITER,
};

/// Stand-in continue candidate for sentences without terminal punctuation.
/// It is only used for scoring and never written to the output.
pub const IMPLICIT_PUNCT: &str = ".";

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("transcript has no sentences")]
    EmptyTranscript,
    #[error("document has no chapter structure")]
    MissingChapters,
    #[error("break delimiter {0:?} must be whitespace ending in a blank line")]
    BadDelimiter(String),
    #[error("prompt of {chars} characters exceeds the limit of {limit}")]
    PromptTooLong { chars: usize, limit: usize },
    /// The model failed at `boundary`; `state` holds every decision made
    /// before it and can be passed to [`ConstrainedDecoder::resume`].
    #[error("decoding aborted at boundary {boundary}: {source}")]
    Aborted {
        boundary: usize,
        state: Box<DecoderState>,
        #[source]
        source: LmError,
    },
    #[error("generation failed: {0}")]
    Generation(#[source] LmError),
}

/// The continue candidate `p` and the break candidates `p + delimiter`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BreakCandidateSet {
    punct: String,
    breaks: Vec<String>,
}

impl BreakCandidateSet {
    pub fn new(punct: &str) -> Self {
        Self {
            punct: punct.to_string(),
            breaks: vec![format!("{punct}{PARAGRAPH_DELIMITER}")],
        }
    }

    /// One break candidate per delimiter variant. Every delimiter must be
    /// whitespace ending in `"\n\n"`.
    pub fn with_delimiters<S: AsRef<str>>(
        punct: &str,
        delimiters: &[S],
    ) -> Result<Self, DecodeError> {
        if delimiters.is_empty() {
            return Err(DecodeError::BadDelimiter(String::new()));
        }
        let mut breaks = Vec::with_capacity(delimiters.len());
        for d in delimiters {
            let d = d.as_ref();
            if !d.ends_with(PARAGRAPH_DELIMITER) || !d.chars().all(char::is_whitespace) {
                return Err(DecodeError::BadDelimiter(d.to_string()));
            }
            breaks.push(format!("{punct}{d}"));
        }
        Ok(Self {
            punct: punct.to_string(),
            breaks,
        })
    }

    pub fn punct(&self) -> &str {
        &self.punct
    }

    pub fn breaks(&self) -> &[String] {
        &self.breaks
    }

    /// All candidates, continue first.
    pub fn candidates(&self) -> Vec<String> {
        std::iter::once(self.punct.clone())
            .chain(self.breaks.iter().cloned())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decision {
    Continue,
    /// Carries the winning break candidate.
    Break(String),
}

/// Picks between continue and the best break candidate.
///
/// Breaks only if the best break strictly beats the continue score; ties
/// continue. Among equal break candidates the first one wins.
pub fn decide(scores: &ScoreResponse, set: &BreakCandidateSet) -> Result<Decision, LmError> {
    let missing = |c: &str| LmError::Protocol(format!("no score for candidate {c:?}"));
    let p_punct = scores.get(&set.punct).ok_or_else(|| missing(&set.punct))?;
    let mut best: Option<(&str, f64)> = None;
    for candidate in &set.breaks {
        let lp = scores.get(candidate).ok_or_else(|| missing(candidate))?;
        if best.is_none_or(|(_, b)| lp > b) {
            best = Some((candidate, lp));
        }
    }
    let (t_star, p_break) = best.expect("candidate set is never empty");
    Ok(if p_break > p_punct {
        Decision::Break(t_star.to_string())
    } else {
        Decision::Continue
    })
}

/// Progress of one decoding loop.
///
/// `output` is the formatted text up to and including sentence `next_index`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecoderState {
    pub output: String,
    pub next_index: usize,
    pub decisions: Vec<bool>,
    pub call_count: usize,
}

impl DecoderState {
    pub fn start(transcript: &Transcript) -> Result<Self, DecodeError> {
        let first = transcript
            .sentences()
            .first()
            .ok_or(DecodeError::EmptyTranscript)?;
        Ok(Self {
            output: first.text.clone(),
            next_index: 0,
            decisions: Vec::new(),
            call_count: 0,
        })
    }

    /// Rebuilds the state reached after replaying `decisions` without
    /// querying a model.
    pub fn replay(transcript: &Transcript, decisions: &[bool]) -> Result<Self, DecodeError> {
        let mut state = Self::start(transcript)?;
        if decisions.len() >= transcript.len() {
            return Err(ModelError::LengthMismatch {
                expected: transcript.len() - 1,
                found: decisions.len(),
            }
            .into());
        }
        for &brk in decisions {
            let i = state.next_index;
            let ending = transcript.sentences()[i].ending();
            let punct = ending.unwrap_or(IMPLICIT_PUNCT);
            let decision = if brk {
                Decision::Break(format!("{punct}{PARAGRAPH_DELIMITER}"))
            } else {
                Decision::Continue
            };
            state.apply(transcript, &decision, punct);
            state.call_count += 1;
        }
        Ok(state)
    }

    fn apply(&mut self, transcript: &Transcript, decision: &Decision, punct: &str) {
        let i = self.next_index;
        let gap = transcript.gap(i);
        let brk = match decision {
            Decision::Continue => {
                // A paragraph gap in the source must not leak into the output.
                self.output
                    .push_str(if is_paragraph_gap(gap) { " " } else { gap });
                false
            }
            Decision::Break(t_star) => {
                self.output.push_str(&t_star[punct.len()..]);
                true
            }
        };
        self.output.push_str(&transcript.sentences()[i + 1].text);
        self.decisions.push(brk);
        self.next_index += 1;
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            base_delay: Duration::from_millis(200),
        }
    }
}

impl RetryPolicy {
    pub fn immediate(attempts: u32) -> Self {
        Self {
            attempts,
            base_delay: Duration::ZERO,
        }
    }

    fn run<T>(&self, mut op: impl FnMut() -> Result<T, LmError>) -> Result<T, LmError> {
        let mut attempt = 0;
        loop {
            match op() {
                Ok(value) => return Ok(value),
                Err(e) if e.is_retryable() && attempt + 1 < self.attempts.max(1) => {
                    if !self.base_delay.is_zero() {
                        thread::sleep(self.base_delay * 2u32.pow(attempt));
                    }
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecoderConfig {
    pub retry: RetryPolicy,
    /// Delimiter variants offered as break candidates.
    pub delimiters: Vec<String>,
    /// Hard limit on the prompt size; longer prompts are an error, never
    /// truncated.
    pub max_prompt_chars: Option<usize>,
    /// Generation budget for the unconstrained rewrite.
    pub max_tokens: u32,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            retry: RetryPolicy::default(),
            delimiters: vec![PARAGRAPH_DELIMITER.to_string()],
            max_prompt_chars: None,
            max_tokens: 8192,
        }
    }
}

/// Formatted text plus the labels it encodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segmentation {
    pub text: String,
    pub labels: BoundaryLabels,
    /// Scoring queries issued.
    pub calls: usize,
}

pub struct ConstrainedDecoder<'a, L: ?Sized> {
    lm: &'a L,
    template: &'a PromptTemplate,
    config: DecoderConfig,
}

impl<'a, L: LanguageModel + ?Sized> ConstrainedDecoder<'a, L> {
    pub fn new(lm: &'a L, template: &'a PromptTemplate) -> Self {
        Self::with_config(lm, template, DecoderConfig::default())
    }

    pub fn with_config(lm: &'a L, template: &'a PromptTemplate, config: DecoderConfig) -> Self {
        Self {
            lm,
            template,
            config,
        }
    }

    pub fn config(&self) -> &DecoderConfig {
        &self.config
    }

    fn check_prompt(&self, messages: &[ChatMessage]) -> Result<(), DecodeError> {
        if let Some(limit) = self.config.max_prompt_chars {
            let chars = messages.iter().map(|m| m.content.chars().count()).sum();
            if chars > limit {
                return Err(DecodeError::PromptTooLong { chars, limit });
            }
        }
        Ok(())
    }

    /// Queries the model once for the boundary after sentence
    /// `state.next_index`. `offset` shifts the boundary position reported to
    /// the model (used for chapters inside a larger document).
    pub fn decide_boundary(
        &self,
        transcript: &Transcript,
        state: &DecoderState,
        offset: usize,
    ) -> Result<Decision, DecodeError> {
        let i = state.next_index;
        let ending = transcript.sentences()[i].ending();
        let shortened = &state.output[..state.output.len() - ending.map_or(0, str::len)];
        let messages = build_prompt(self.template, transcript.trimmed_text(), shortened)?;
        self.check_prompt(&messages)?;
        let set = BreakCandidateSet::with_delimiters(
            ending.unwrap_or(IMPLICIT_PUNCT),
            &self.config.delimiters,
        )?;
        let request = ScoreRequest {
            messages,
            candidates: set.candidates(),
        };
        let abort = |source| DecodeError::Aborted {
            boundary: offset + i,
            state: Box::new(state.clone()),
            source,
        };
        let response = self
            .config
            .retry
            .run(|| self.lm.score(&request, offset + i))
            .map_err(abort)?;
        response.validate(&request).map_err(abort)?;
        decide(&response, &set).map_err(abort)
    }

    fn run(
        &self,
        transcript: &Transcript,
        mut state: DecoderState,
        offset: usize,
    ) -> Result<DecoderState, DecodeError> {
        while state.next_index + 1 < transcript.len() {
            let decision = self.decide_boundary(transcript, &state, offset)?;
            let punct = transcript.sentences()[state.next_index]
                .ending()
                .unwrap_or(IMPLICIT_PUNCT);
            state.apply(transcript, &decision, punct);
            state.call_count += 1;
        }
        Ok(state)
    }

    fn finish(transcript: &Transcript, state: DecoderState) -> Result<Segmentation, DecodeError> {
        let labels =
            BoundaryLabels::from_indicators(transcript.id(), Level::Paragraph, &state.decisions)?;
        Ok(Segmentation {
            text: state.output,
            labels,
            calls: state.call_count,
        })
    }

    /// Inserts paragraph breaks into `transcript`.
    pub fn insert_paragraphs(&self, transcript: &Transcript) -> Result<Segmentation, DecodeError> {
        let state = self.run(transcript, DecoderState::start(transcript)?, 0)?;
        Self::finish(transcript, state)
    }

    /// Continues an aborted run from its saved state.
    pub fn resume(
        &self,
        transcript: &Transcript,
        state: DecoderState,
    ) -> Result<Segmentation, DecodeError> {
        let state = self.run(transcript, state, 0)?;
        Self::finish(transcript, state)
    }

    /// Decodes every chapter on its own. Chapter seams become `CHAP`
    /// boundaries without a model query; the result is hierarchical.
    pub fn insert_paragraphs_sectionwise(
        &self,
        doc: &SegmentedDocument,
    ) -> Result<Segmentation, DecodeError> {
        let chapters = doc.chapters().ok_or(DecodeError::MissingChapters)?;
        let transcript = doc.transcript();
        let mut labels = Vec::with_capacity(transcript.len().saturating_sub(1));
        let mut texts = Vec::with_capacity(chapters.len());
        let mut calls = 0;
        for (ci, chapter) in chapters.iter().enumerate() {
            if ci > 0 {
                labels.push(Label::Chap);
            }
            let block = transcript.slice(chapter.sentences.clone());
            let state = self.run(&block, DecoderState::start(&block)?, chapter.sentences.start)?;
            labels.extend(
                state
                    .decisions
                    .iter()
                    .map(|&b| if b { Label::Para } else { Label::None }),
            );
            calls += state.call_count;
            texts.push(state.output);
        }
        Ok(Segmentation {
            text: texts.join(PARAGRAPH_DELIMITER),
            labels: BoundaryLabels::new(transcript.id(), Level::Hierarchical, labels)?,
            calls,
        })
    }

    /// Unconstrained rewrite: the model generates the whole formatted text.
    /// Nothing guarantees that the result matches the transcript.
    pub fn naive_rewrite(&self, transcript: &Transcript) -> Result<String, DecodeError> {
        let messages = build_prompt(self.template, transcript.trimmed_text(), "")?;
        self.check_prompt(&messages)?;
        let request = GenerateRequest {
            messages,
            max_tokens: self.config.max_tokens,
        };
        self.config
            .retry
            .run(|| self.lm.generate(&request))
            .map(|r| r.text)
            .map_err(DecodeError::Generation)
    }
}

/// Convenience wrapper around [`ConstrainedDecoder::insert_paragraphs`].
pub fn insert_paragraphs<L: LanguageModel + ?Sized>(
    transcript: &Transcript,
    lm: &L,
    template: &PromptTemplate,
) -> Result<Segmentation, DecodeError> {
    ConstrainedDecoder::new(lm, template).insert_paragraphs(transcript)
}

pub fn insert_paragraphs_sectionwise<L: LanguageModel + ?Sized>(
    doc: &SegmentedDocument,
    lm: &L,
    template: &PromptTemplate,
) -> Result<Segmentation, DecodeError> {
    ConstrainedDecoder::new(lm, template).insert_paragraphs_sectionwise(doc)
}

pub fn naive_rewrite<L: LanguageModel + ?Sized>(
    transcript: &Transcript,
    lm: &L,
    template: &PromptTemplate,
) -> Result<String, DecodeError> {
    ConstrainedDecoder::new(lm, template).naive_rewrite(transcript)
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Mutex;

    use super::*;
    use crate::types::Chapter;

    fn transcript(sentences: &[&str]) -> Transcript {
        Transcript::from_sentences("doc", sentences).unwrap()
    }

    fn scores(pairs: &[(&str, f64)]) -> ScoreResponse {
        ScoreResponse {
            scores: pairs.iter().map(|(c, s)| (c.to_string(), *s)).collect(),
        }
    }

    #[test]
    fn decision_rule() {
        let set = BreakCandidateSet::new(".");
        assert_eq!(
            decide(&scores(&[(".", -1.0), (".\n\n", -0.5)]), &set).unwrap(),
            Decision::Break(".\n\n".into())
        );
        assert_eq!(
            decide(&scores(&[(".", -1.0), (".\n\n", -1.0)]), &set).unwrap(),
            Decision::Continue
        );
        assert_eq!(
            decide(&scores(&[(".", -0.2), (".\n\n", -0.9)]), &set).unwrap(),
            Decision::Continue
        );
    }

    #[test]
    fn argmax_over_break_variants() {
        let set = BreakCandidateSet::with_delimiters("!", &["\n\n", "\n\n\n"]).unwrap();
        let r = scores(&[("!", -3.0), ("!\n\n", -2.0), ("!\n\n\n", -1.0)]);
        assert_eq!(decide(&r, &set).unwrap(), Decision::Break("!\n\n\n".into()));
        assert!(BreakCandidateSet::with_delimiters(".", &["x\n\n"]).is_err());
        assert!(BreakCandidateSet::with_delimiters(".", &["\n"]).is_err());
    }

    /// Records every request so tests can inspect prompts.
    #[derive(Default)]
    struct Recorder {
        requests: Mutex<Vec<(usize, ScoreRequest)>>,
        inner: ScriptedLm,
    }

    impl LanguageModel for Recorder {
        fn score(&self, request: &ScoreRequest, boundary: usize) -> Result<ScoreResponse, LmError> {
            self.requests.lock().unwrap().push((boundary, request.clone()));
            self.inner.score(request, boundary)
        }
    }

    #[test]
    fn single_sentence_needs_no_queries() {
        let lm = CountingLm::new(ScriptedLm::default());
        let t = transcript(&["Only one."]);
        let out = insert_paragraphs(&t, &lm, &PromptTemplate::default()).unwrap();
        assert_eq!(lm.calls(), 0);
        assert_eq!(out.text, "Only one.");
        assert!(out.labels.labels().is_empty());
    }

    #[test]
    fn scripted_break() {
        let lm = ScriptedLm::breaking_at([1]);
        let t = transcript(&["S1.", "S2.", "S3."]);
        let out = insert_paragraphs(&t, &lm, &PromptTemplate::default()).unwrap();
        assert_eq!(out.text, "S1. S2.\n\nS3.");
        assert_eq!(out.labels.indicators(Level::Paragraph).unwrap(), vec![false, true]);
        assert_eq!(out.calls, 2);
    }

    #[test]
    fn prompts_strip_the_final_punctuation() {
        let lm = Recorder {
            inner: ScriptedLm::breaking_at([0]),
            ..Default::default()
        };
        let template = PromptTemplate::new("sys", "T: {input}", "P:\n\n").unwrap();
        let t = transcript(&["Hello there!", "And you?", "Fine \"thanks.\""]);
        let out = ConstrainedDecoder::new(&lm, &template)
            .insert_paragraphs(&t)
            .unwrap();
        assert_eq!(out.text, "Hello there!\n\nAnd you? Fine \"thanks.\"");
        let requests = lm.requests.lock().unwrap();
        assert_eq!(requests.len(), 2);
        let (b0, r0) = &requests[0];
        assert_eq!(*b0, 0);
        assert_eq!(r0.messages[1].content, format!("T: {}", t.text()));
        assert_eq!(r0.messages[2].content, "P:\n\nHello there");
        assert_eq!(r0.candidates, vec!["!".to_string(), "!\n\n".to_string()]);
        let (_, r1) = &requests[1];
        assert_eq!(r1.messages[2].content, "P:\n\nHello there!\n\nAnd you");
    }

    #[test]
    fn unpunctuated_sentences_score_an_implicit_period() {
        let lm = Recorder {
            inner: ScriptedLm::breaking_at([0]),
            ..Default::default()
        };
        let t = Transcript::new("asr", "so we begin\n\nand then we stop");
        assert_eq!(t.len(), 2);
        let out = ConstrainedDecoder::new(&lm, &PromptTemplate::default())
            .insert_paragraphs(&t)
            .unwrap();
        assert_eq!(out.text, "so we begin\n\nand then we stop");
        let requests = lm.requests.lock().unwrap();
        assert_eq!(requests[0].1.candidates, vec![".".to_string(), ".\n\n".to_string()]);

        let out = insert_paragraphs(&t, &ScriptedLm::default(), &PromptTemplate::default()).unwrap();
        assert_eq!(out.text, "so we begin and then we stop");
    }

    #[test]
    fn original_whitespace_is_kept_on_continue() {
        let t = Transcript::new("ws", "One.  Two.\tThree.");
        let out = insert_paragraphs(&t, &ScriptedLm::default(), &PromptTemplate::default()).unwrap();
        assert_eq!(out.text, "One.  Two.\tThree.");
    }

    struct Flaky {
        failures: AtomicUsize,
        error: LmError,
    }

    impl LanguageModel for Flaky {
        fn score(&self, request: &ScoreRequest, boundary: usize) -> Result<ScoreResponse, LmError> {
            if self
                .failures
                .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
                .is_ok()
            {
                return Err(self.error.clone());
            }
            ScriptedLm::always(MockDecision::Break).score(request, boundary)
        }
    }

    fn fast() -> DecoderConfig {
        DecoderConfig {
            retry: RetryPolicy::immediate(3),
            ..DecoderConfig::default()
        }
    }

    #[test]
    fn transient_failures_are_retried() {
        let lm = Flaky {
            failures: AtomicUsize::new(2),
            error: LmError::Transport("reset".into()),
        };
        let template = PromptTemplate::default();
        let t = transcript(&["A.", "B."]);
        let out = ConstrainedDecoder::with_config(&lm, &template, fast())
            .insert_paragraphs(&t)
            .unwrap();
        assert_eq!(out.text, "A.\n\nB.");
    }

    #[test]
    fn exhausted_retries_abort_with_resumable_state() {
        let template = PromptTemplate::default();
        let t = transcript(&["A.", "B.", "C."]);
        let lm = Flaky {
            failures: AtomicUsize::new(3),
            error: LmError::Transport("down".into()),
        };
        let decoder = ConstrainedDecoder::with_config(&lm, &template, fast());
        let err = decoder.insert_paragraphs(&t).unwrap_err();
        let DecodeError::Aborted { boundary, state, .. } = err else {
            panic!("expected abort, got {err:?}");
        };
        assert_eq!(boundary, 0);
        assert_eq!(state.call_count, state.next_index);
        let out = decoder.resume(&t, *state).unwrap();
        assert_eq!(out.text, "A.\n\nB.\n\nC.");
    }

    #[test]
    fn protocol_errors_are_not_retried() {
        let lm = Flaky {
            failures: AtomicUsize::new(1),
            error: LmError::ContextOverflow("too long".into()),
        };
        let template = PromptTemplate::default();
        let decoder = ConstrainedDecoder::with_config(&lm, &template, fast());
        let err = decoder.insert_paragraphs(&transcript(&["A.", "B."])).unwrap_err();
        assert!(matches!(
            err,
            DecodeError::Aborted {
                source: LmError::ContextOverflow(_),
                ..
            }
        ));
        assert_eq!(lm.failures.load(Ordering::SeqCst), 0);
    }

    #[test]
    fn prompt_limit_is_a_hard_error() {
        let template = PromptTemplate::default();
        let lm = ScriptedLm::default();
        let config = DecoderConfig {
            max_prompt_chars: Some(100),
            ..fast()
        };
        let err = ConstrainedDecoder::with_config(&lm, &template, config)
            .insert_paragraphs(&transcript(&["A.", "B."]))
            .unwrap_err();
        assert!(matches!(err, DecodeError::PromptTooLong { limit: 100, .. }));
    }

    #[test]
    fn replay_matches_live_decoding() {
        let t = transcript(&["A.", "B?", "C!", "D."]);
        let lm = ScriptedLm::breaking_at([0, 2]);
        let template = PromptTemplate::default();
        let decoder = ConstrainedDecoder::new(&lm, &template);
        let live = decoder.insert_paragraphs(&t).unwrap();
        let replayed = DecoderState::replay(&t, &[true, false]).unwrap();
        let resumed = decoder.resume(&t, replayed).unwrap();
        assert_eq!(resumed, live);
    }

    fn chaptered(chapters: &[&[&str]]) -> SegmentedDocument {
        let sentences: Vec<&str> = chapters.iter().flat_map(|c| c.iter().copied()).collect();
        let mut start = 0;
        let spans = chapters
            .iter()
            .map(|c| {
                let ch = Chapter {
                    title: None,
                    sentences: start..start + c.len(),
                };
                start += c.len();
                ch
            })
            .collect();
        SegmentedDocument::new(transcript(&sentences), None, Some(spans)).unwrap()
    }

    #[test]
    fn sectionwise_forces_chapter_seams() {
        let doc = chaptered(&[&["A.", "B."], &["C.", "D."]]);
        let lm = CountingLm::new(ScriptedLm::default());
        let out = insert_paragraphs_sectionwise(&doc, &lm, &PromptTemplate::default()).unwrap();
        assert_eq!(out.labels.labels(), &[Label::None, Label::Chap, Label::None]);
        assert_eq!(out.text, "A. B.\n\nC. D.");
        assert_eq!(lm.calls(), 2);
    }

    #[test]
    fn sectionwise_single_chapter_reduces_to_plain_decoding() {
        let doc = chaptered(&[&["A.", "B.", "C."]]);
        let lm = ScriptedLm::breaking_at([1]);
        let template = PromptTemplate::default();
        let sectioned = insert_paragraphs_sectionwise(&doc, &lm, &template).unwrap();
        let plain = insert_paragraphs(doc.transcript(), &lm, &template).unwrap();
        assert_eq!(sectioned.text, plain.text);
        assert_eq!(
            sectioned.labels.project(Level::Paragraph).unwrap().labels(),
            plain.labels.labels()
        );
    }

    #[test]
    fn sectionwise_reports_document_positions_and_skips_single_sentence_chapters() {
        let doc = chaptered(&[&["A.", "B."], &["C."], &["D.", "E.", "F."]]);
        let lm = Recorder::default();
        let out = ConstrainedDecoder::new(&lm, &PromptTemplate::default())
            .insert_paragraphs_sectionwise(&doc)
            .unwrap();
        let boundaries: Vec<usize> = lm.requests.lock().unwrap().iter().map(|(b, _)| *b).collect();
        assert_eq!(boundaries, vec![0, 3, 4]);
        assert_eq!(out.calls, 3);
        let requests = lm.requests.lock().unwrap();
        // Each chapter is prompted with its own text only.
        assert!(requests[1].1.messages[1].content.contains("D. E. F."));
        assert!(!requests[1].1.messages[1].content.contains("A. B."));
    }

    #[test]
    fn sectionwise_requires_chapters() {
        let doc = SegmentedDocument::new(transcript(&["A."]), None, None).unwrap();
        assert!(matches!(
            insert_paragraphs_sectionwise(&doc, &ScriptedLm::default(), &PromptTemplate::default()),
            Err(DecodeError::MissingChapters)
        ));
    }

    #[test]
    fn naive_rewrite_returns_generation() {
        let lm = ScriptedLm::default().with_generation("A.\n\nB.");
        let t = transcript(&["A.", "B."]);
        assert_eq!(naive_rewrite(&t, &lm, &PromptTemplate::default()).unwrap(), "A.\n\nB.");
        let err = naive_rewrite(&t, &ScriptedLm::default(), &PromptTemplate::default());
        assert!(matches!(err, Err(DecodeError::Generation(LmError::Unsupported(_)))));
    }
}
