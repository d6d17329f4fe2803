//! The language-model contract used by the decoder.
//!
//! A model scores whole candidate continuation strings given a chat prompt,
//! so callers never deal with a particular tokenizer's vocabulary. Free-running
//! generation is only needed for the unconstrained rewrite baseline.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::prompt::ChatMessage;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub messages: Vec<ChatMessage>,
    pub candidates: Vec<String>,
}

/// Candidate string to log-probability.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub scores: BTreeMap<String, f64>,
}

impl ScoreResponse {
    /// Every requested candidate must be present with a log-probability <= 0.
    pub fn validate(&self, request: &ScoreRequest) -> Result<(), LmError> {
        for candidate in &request.candidates {
            match self.scores.get(candidate) {
                None => {
                    return Err(LmError::Protocol(format!(
                        "no score for candidate {candidate:?}"
                    )))
                }
                Some(lp) if lp.is_nan() || *lp > 0.0 => {
                    return Err(LmError::Protocol(format!(
                        "invalid log-probability {lp} for {candidate:?}"
                    )))
                }
                Some(_) => {}
            }
        }
        Ok(())
    }

    pub fn get(&self, candidate: &str) -> Option<f64> {
        self.scores.get(candidate).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateRequest {
    pub messages: Vec<ChatMessage>,
    pub max_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateResponse {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LmError {
    /// Connection failures, timeouts and server-side errors. Worth retrying.
    #[error("transport error: {0}")]
    Transport(String),
    /// The server answered but the exchange was invalid.
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("prompt exceeds the model context: {0}")]
    ContextOverflow(String),
    #[error("operation not supported by this model: {0}")]
    Unsupported(&'static str),
}

impl LmError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, LmError::Transport(_))
    }
}

/// A model that can score candidate continuations.
///
/// `boundary` is the document-level boundary position the query belongs to.
/// Remote models ignore it; scripted mocks use it to look up their policy.
pub trait LanguageModel: Send + Sync {
    fn score(&self, request: &ScoreRequest, boundary: usize) -> Result<ScoreResponse, LmError>;

    fn generate(&self, _request: &GenerateRequest) -> Result<GenerateResponse, LmError> {
        Err(LmError::Unsupported("generate"))
    }
}

impl<L: LanguageModel + ?Sized> LanguageModel for &L {
    fn score(&self, request: &ScoreRequest, boundary: usize) -> Result<ScoreResponse, LmError> {
        (**self).score(request, boundary)
    }

    fn generate(&self, request: &GenerateRequest) -> Result<GenerateResponse, LmError> {
        (**self).generate(request)
    }
}

impl<L: LanguageModel + ?Sized> LanguageModel for Arc<L> {
    fn score(&self, request: &ScoreRequest, boundary: usize) -> Result<ScoreResponse, LmError> {
        (**self).score(request, boundary)
    }

    fn generate(&self, request: &GenerateRequest) -> Result<GenerateResponse, LmError> {
        (**self).generate(request)
    }
}

impl<L: LanguageModel + ?Sized> LanguageModel for Box<L> {
    fn score(&self, request: &ScoreRequest, boundary: usize) -> Result<ScoreResponse, LmError> {
        (**self).score(request, boundary)
    }

    fn generate(&self, request: &GenerateRequest) -> Result<GenerateResponse, LmError> {
        (**self).generate(request)
    }
}

/// Wraps a model and counts the scoring queries that reach it.
#[derive(Debug, Default)]
pub struct CountingLm<L> {
    inner: L,
    calls: AtomicUsize,
}

impl<L> CountingLm<L> {
    pub fn new(inner: L) -> Self {
        Self {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn reset(&self) {
        self.calls.store(0, Ordering::SeqCst);
    }
}

impl<L: LanguageModel> LanguageModel for CountingLm<L> {
    fn score(&self, request: &ScoreRequest, boundary: usize) -> Result<ScoreResponse, LmError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.score(request, boundary)
    }

    fn generate(&self, request: &GenerateRequest) -> Result<GenerateResponse, LmError> {
        self.inner.generate(request)
    }
}
