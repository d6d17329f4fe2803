//! Blocking HTTP client for a remote scoring server.
//!
//! `POST {base}/score` takes `{messages, candidates}` and answers
//! `{scores: {candidate: logprob}}`. `POST {base}/generate` takes
//! `{messages, max_tokens}` and answers `{text}`. The boundary position is
//! sent in the `X-Boundary-Index` header for logging on the server side.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;
use ureq::Agent;

use super::lm::{GenerateRequest, GenerateResponse, LanguageModel, LmError, ScoreRequest, ScoreResponse};

#[derive(Debug, Clone)]
pub struct HttpLm {
    base: String,
    agent: Agent,
}

impl HttpLm {
    pub fn new(base_url: &str) -> Self {
        Self::with_timeout(base_url, Duration::from_secs(300))
    }

    pub fn with_timeout(base_url: &str, timeout: Duration) -> Self {
        let agent = Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            base: base_url.trim_end_matches('/').to_string(),
            agent,
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    fn post<B: Serialize, R: DeserializeOwned>(
        &self,
        path: &str,
        body: &B,
        boundary: Option<usize>,
    ) -> Result<R, LmError> {
        let mut request = self.agent.post(format!("{}{path}", self.base));
        if let Some(b) = boundary {
            request = request.header("X-Boundary-Index", b.to_string());
        }
        let mut response = request
            .send_json(body)
            .map_err(|e| LmError::Transport(e.to_string()))?;
        let status = response.status().as_u16();
        if !(200..300).contains(&status) {
            let detail = response
                .body_mut()
                .read_to_string()
                .unwrap_or_default();
            return Err(match status {
                413 => LmError::ContextOverflow(detail),
                408 | 429 | 500..=599 => LmError::Transport(format!("status {status}: {detail}")),
                _ => LmError::Protocol(format!("status {status}: {detail}")),
            });
        }
        response
            .body_mut()
            .read_json()
            .map_err(|e| LmError::Protocol(format!("invalid response body: {e}")))
    }
}

impl LanguageModel for HttpLm {
    fn score(&self, request: &ScoreRequest, boundary: usize) -> Result<ScoreResponse, LmError> {
        self.post("/score", request, Some(boundary))
    }

    fn generate(&self, request: &GenerateRequest) -> Result<GenerateResponse, LmError> {
        self.post("/generate", request, None)
    }
}
