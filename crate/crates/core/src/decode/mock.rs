//! Deterministic stand-ins for a language model.
//!
//! [`ScriptedLm`] follows a per-boundary script, usually loaded from a JSON
//! policy file:
//!
//! ```json
//! {"default": "continue",
//!  "boundaries": {"1": "break", "3": {"punct": -1.0, "break": -0.5}},
//!  "generate": "text returned by the generation endpoint"}
//! ```
//!
//! [`RandomLm`] draws scores from a seeded generator keyed by boundary, so
//! its answers do not depend on query order.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::lm::{GenerateRequest, GenerateResponse, LanguageModel, LmError, ScoreRequest, ScoreResponse};
use super::prompt::PARAGRAPH_DELIMITER;

const LIKELY: f64 = -0.1;
const UNLIKELY: f64 = -2.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MockDecision {
    Continue,
    Break,
}

/// What the mock answers at one boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BoundaryScript {
    Decision(MockDecision),
    Scores {
        punct: f64,
        #[serde(rename = "break")]
        brk: f64,
    },
}

impl Default for BoundaryScript {
    fn default() -> Self {
        BoundaryScript::Decision(MockDecision::Continue)
    }
}

fn is_break_candidate(candidate: &str) -> bool {
    candidate.ends_with(PARAGRAPH_DELIMITER)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScriptedLm {
    #[serde(default)]
    pub default: BoundaryScript,
    #[serde(default)]
    pub boundaries: BTreeMap<usize, BoundaryScript>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generate: Option<String>,
}

impl ScriptedLm {
    pub fn always(decision: MockDecision) -> Self {
        Self {
            default: BoundaryScript::Decision(decision),
            ..Self::default()
        }
    }

    /// Breaks exactly at `positions`, continues elsewhere.
    pub fn breaking_at(positions: impl IntoIterator<Item = usize>) -> Self {
        Self {
            boundaries: positions
                .into_iter()
                .map(|p| (p, BoundaryScript::Decision(MockDecision::Break)))
                .collect(),
            ..Self::default()
        }
    }

    pub fn with_generation(mut self, text: impl Into<String>) -> Self {
        self.generate = Some(text.into());
        self
    }

    pub fn set(&mut self, boundary: usize, script: BoundaryScript) {
        self.boundaries.insert(boundary, script);
    }

    pub fn load(path: &Path) -> Result<Self, LmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LmError::Protocol(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| LmError::Protocol(format!("{}: {e}", path.display())))
    }
}

impl LanguageModel for ScriptedLm {
    fn score(&self, request: &ScoreRequest, boundary: usize) -> Result<ScoreResponse, LmError> {
        let script = self.boundaries.get(&boundary).unwrap_or(&self.default);
        let (punct, brk) = match *script {
            BoundaryScript::Decision(MockDecision::Continue) => (LIKELY, UNLIKELY),
            BoundaryScript::Decision(MockDecision::Break) => (UNLIKELY, LIKELY),
            BoundaryScript::Scores { punct, brk } => (punct, brk),
        };
        let scores = request
            .candidates
            .iter()
            .map(|c| (c.clone(), if is_break_candidate(c) { brk } else { punct }))
            .collect();
        Ok(ScoreResponse { scores })
    }

    fn generate(&self, _request: &GenerateRequest) -> Result<GenerateResponse, LmError> {
        self.generate
            .clone()
            .map(|text| GenerateResponse { text })
            .ok_or(LmError::Unsupported("scripted generation text not set"))
    }
}

/// Seeded random scores, independent per boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomLm {
    pub seed: u64,
}

impl RandomLm {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }
}

impl LanguageModel for RandomLm {
    fn score(&self, request: &ScoreRequest, boundary: usize) -> Result<ScoreResponse, LmError> {
        let key = self.seed ^ (boundary as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        let scores = request
            .candidates
            .iter()
            .map(|c| (c.clone(), -rng.random_range(0.0..5.0)))
            .collect();
        Ok(ScoreResponse { scores })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request() -> ScoreRequest {
        ScoreRequest {
            messages: vec![],
            candidates: vec!["?".into(), "?\n\n".into()],
        }
    }

    #[test]
    fn script_file_format() {
        let lm: ScriptedLm = serde_json::from_str(
            r#"{"default":"continue","boundaries":{"1":"break","3":{"punct":-1.0,"break":-0.5}}}"#,
        )
        .unwrap();
        let r = lm.score(&request(), 3).unwrap();
        assert_eq!(r.get("?"), Some(-1.0));
        assert_eq!(r.get("?\n\n"), Some(-0.5));
        let r = lm.score(&request(), 1).unwrap();
        assert!(r.get("?\n\n").unwrap() > r.get("?").unwrap());
        let r = lm.score(&request(), 0).unwrap();
        assert!(r.get("?\n\n").unwrap() < r.get("?").unwrap());
    }

    #[test]
    fn random_scores_depend_only_on_seed_and_boundary() {
        let lm = RandomLm::new(7);
        let a = lm.score(&request(), 4).unwrap();
        let _ = lm.score(&request(), 5).unwrap();
        assert_eq!(lm.score(&request(), 4).unwrap(), a);
        assert!(a.validate(&request()).is_ok());
    }
}
