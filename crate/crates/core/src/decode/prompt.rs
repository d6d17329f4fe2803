//! Chat prompt construction for paragraph insertion.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const INPUT_PLACEHOLDER: &str = "{input}";
pub const PARAGRAPH_DELIMITER: &str = "\n\n";

const DEFAULT_SYSTEM: &str = "You format speech transcripts into readable paragraphs.";

const DEFAULT_USER: &str = "Below is the transcript of a talk. Split it into paragraphs \
by placing a blank line (two newline characters) between them.

{input}

Start a new paragraph where the speaker moves to a new point, example or step in the argument. \
Keep each paragraph focused on one idea and avoid very long paragraphs. \
Copy every word and punctuation mark as given: the only change allowed is inserting paragraph breaks.";

const DEFAULT_PREFILL: &str = "The transcript split into paragraphs:\n\n";

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("user text must contain exactly one {INPUT_PLACEHOLDER} placeholder, found {0}")]
    Placeholder(usize),
    #[error("assistant prefill must end with the paragraph delimiter")]
    Prefill,
    #[error("reading template {path}: {message}")]
    Load { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

/// System text, user text with an `{input}` slot, and an assistant prefill.
///
/// Stored on disk as TOML with `system`, `user` and `prefill` keys.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub system: String,
    pub user: String,
    pub prefill: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self {
            system: DEFAULT_SYSTEM.to_string(),
            user: DEFAULT_USER.to_string(),
            prefill: DEFAULT_PREFILL.to_string(),
        }
    }
}

impl PromptTemplate {
    pub fn new(
        system: impl Into<String>,
        user: impl Into<String>,
        prefill: impl Into<String>,
    ) -> Result<Self, TemplateError> {
        let template = Self {
            system: system.into(),
            user: user.into(),
            prefill: prefill.into(),
        };
        template.validate()?;
        Ok(template)
    }

    pub fn validate(&self) -> Result<(), TemplateError> {
        let slots = self.user.matches(INPUT_PLACEHOLDER).count();
        if slots != 1 {
            return Err(TemplateError::Placeholder(slots));
        }
        if !self.prefill.ends_with(PARAGRAPH_DELIMITER) {
            return Err(TemplateError::Prefill);
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, TemplateError> {
        let template: PromptTemplate = toml::from_str(text).map_err(|e| TemplateError::Load {
            path: "<inline>".into(),
            message: e.to_string(),
        })?;
        template.validate()?;
        Ok(template)
    }

    pub fn load(path: &Path) -> Result<Self, TemplateError> {
        let text = std::fs::read_to_string(path).map_err(|e| TemplateError::Load {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml(&text).map_err(|e| match e {
            TemplateError::Load { message, .. } => TemplateError::Load {
                path: path.display().to_string(),
                message,
            },
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("template fields are plain strings")
    }
}

/// Messages for one decoding step: the transcript goes into the user turn,
/// the partial output is appended to the assistant prefill.
///
/// `output_so_far` must already have its trailing sentence punctuation
/// removed.
pub fn build_prompt(
    template: &PromptTemplate,
    transcript_text: &str,
    output_so_far: &str,
) -> Result<Vec<ChatMessage>, TemplateError> {
    template.validate()?;
    Ok(vec![
        ChatMessage {
            role: Role::System,
            content: template.system.clone(),
        },
        ChatMessage {
            role: Role::User,
            content: template.user.replacen(INPUT_PLACEHOLDER, transcript_text, 1),
        },
        ChatMessage {
            role: Role::Assistant,
            content: format!("{}{}", template.prefill, output_so_far),
        },
    ])
}
