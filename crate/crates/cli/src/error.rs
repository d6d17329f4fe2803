use std::io;
use std::path::Path;

use paraseg::baselines::BaselineError;
use paraseg::decode::{DecodeError, LmError, TemplateError};
use paraseg::fidelity::FidelityError;
use paraseg::humaneval::HumanEvalError;
use paraseg::ingest::IngestError;
use paraseg::metrics::MetricError;
use paraseg::senttok::AbbreviationError;
use paraseg::types::ModelError;
use paraseg_service::ServiceError;
use thiserror::Error;

/// Process exit codes. Argument errors exit with 2 through clap.
pub mod code {
    pub const IO: i32 = 3;
    pub const SCHEMA: i32 = 4;
    pub const MODEL: i32 = 5;
    pub const EVALUATION: i32 = 6;
    pub const SERVICE: i32 = 7;
    pub const USAGE: i32 = 2;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Schema(String),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Lm(#[from] LmError),
    #[error("{0} document(s) aborted")]
    Aborted(usize),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Fidelity(#[from] FidelityError),
    #[error(transparent)]
    HumanEval(#[from] HumanEvalError),
    #[error(transparent)]
    Service(#[from] ServiceError),
}

impl CliError {
    pub fn io(path: impl AsRef<Path>, source: io::Error) -> Self {
        CliError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => code::IO,
            CliError::Usage(_) => code::USAGE,
            CliError::Schema(_) => code::SCHEMA,
            CliError::Decode(DecodeError::Template(_)) => code::SCHEMA,
            CliError::Decode(_) | CliError::Lm(_) | CliError::Aborted(_) => code::MODEL,
            CliError::Metric(_) | CliError::Fidelity(_) => code::EVALUATION,
            CliError::Baseline(BaselineError::Io { .. }) => code::IO,
            CliError::Baseline(_) => code::SCHEMA,
            CliError::HumanEval(HumanEvalError::Io(_)) => code::IO,
            CliError::HumanEval(_) => code::SCHEMA,
            CliError::Service(ServiceError::Io { .. }) => code::IO,
            CliError::Service(ServiceError::Ingest(IngestError::Io { .. })) => code::IO,
            CliError::Service(_) => code::SERVICE,
        }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Io { path, source } => CliError::io(path, source),
            other => CliError::Schema(other.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Schema(e.to_string())
    }
}

impl From<TemplateError> for CliError {
    fn from(e: TemplateError) -> Self {
        CliError::Decode(DecodeError::Template(e))
    }
}

impl From<AbbreviationError> for CliError {
    fn from(e: AbbreviationError) -> Self {
        CliError::Schema(e.to_string())
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
