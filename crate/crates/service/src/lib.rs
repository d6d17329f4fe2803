//! HTTP backend for human-evaluation studies.
//!
//! Endpoints:
//!
//! - `GET /api/trial?participant=..&mode=ab|likert` returns the next trial,
//!   or `204 No Content` once the participant has seen every combination.
//! - `POST /api/judgment` takes `{trial_id, participant, response}`.
//! - `GET /api/results/elo` and `GET /api/results/likert` aggregate the
//!   judgment store.
//!
//! Trial payloads never carry system ids.

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Query, State};
use axum::http::{HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Duration, Utc};
use paraseg::humaneval::{
    compute_elo, compute_likert, EloConfig, EvalSession, HumanEvalError, JudgmentStore, Mode, Sampler,
    Submission, Trial,
};
use paraseg::ingest::{read_jsonl_dataset, render_plain_text, split_paragraphs, IngestError};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tower_http::cors::{Any, CorsLayer};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid systems manifest {path}: {message}")]
    Manifest { path: String, message: String },
    #[error("system {system} has no output for document {doc}")]
    MissingOutput { system: String, doc: String },
    #[error("invalid CORS origin {0:?}")]
    CorsOrigin(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    HumanEval(#[from] HumanEvalError),
}

/// Rendered outputs of every system on every study document.
#[derive(Debug, Clone)]
pub struct Study {
    docs: Vec<String>,
    systems: Vec<String>,
    texts: HashMap<(String, String), String>,
}

#[derive(Debug, Deserialize)]
struct SystemsManifest {
    systems: BTreeMap<String, PathBuf>,
}

impl Study {
    /// `outputs` maps system id to document id to rendered text. Every
    /// system must cover every document in `docs`.
    pub fn new(docs: Vec<String>, outputs: BTreeMap<String, BTreeMap<String, String>>) -> Result<Self, ServiceError> {
        let mut texts = HashMap::new();
        for (system, by_doc) in &outputs {
            for doc in &docs {
                let text = by_doc.get(doc).ok_or_else(|| ServiceError::MissingOutput {
                    system: system.clone(),
                    doc: doc.clone(),
                })?;
                texts.insert((system.clone(), doc.clone()), text.clone());
            }
        }
        Ok(Self {
            docs,
            systems: outputs.into_keys().collect(),
            texts,
        })
    }

    /// Loads a TOML systems manifest and a documents manifest.
    ///
    /// The systems manifest has a `[systems]` table mapping each system id
    /// to a JSONL dataset of its segmented outputs; relative paths resolve
    /// against the manifest's directory. The documents manifest lists one
    /// document id per line, with `#` comments.
    pub fn load(systems_manifest: &Path, documents_manifest: &Path) -> Result<Self, ServiceError> {
        let read = |path: &Path| {
            std::fs::read_to_string(path).map_err(|source| ServiceError::Io {
                path: path.display().to_string(),
                source,
            })
        };
        let docs: Vec<String> = read(documents_manifest)?
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty())
            .map(str::to_string)
            .collect();
        let manifest: SystemsManifest =
            toml::from_str(&read(systems_manifest)?).map_err(|e| ServiceError::Manifest {
                path: systems_manifest.display().to_string(),
                message: e.to_string(),
            })?;
        let base = systems_manifest.parent().unwrap_or(Path::new("."));
        let mut outputs = BTreeMap::new();
        for (system, path) in manifest.systems {
            let records = read_jsonl_dataset(&base.join(path))?;
            let by_doc = records
                .iter()
                .map(|r| (r.id.clone(), render_plain_text(r)))
                .collect();
            outputs.insert(system, by_doc);
        }
        Self::new(docs, outputs)
    }

    pub fn docs(&self) -> &[String] {
        &self.docs
    }

    pub fn systems(&self) -> &[String] {
        &self.systems
    }

    fn text(&self, system: &str, doc: &str) -> &str {
        self.texts
            .get(&(system.to_string(), doc.to_string()))
            .map_or("", String::as_str)
    }
}

pub type Clock = Arc<dyn Fn() -> DateTime<Utc> + Send + Sync>;

pub struct AppState {
    session: Mutex<EvalSession>,
    study: Study,
    elo: EloConfig,
    clock: Clock,
}

impl AppState {
    pub fn new(session: EvalSession, study: Study) -> Self {
        Self {
            session: Mutex::new(session),
            study,
            elo: EloConfig::default(),
            clock: Arc::new(Utc::now),
        }
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_elo(mut self, elo: EloConfig) -> Self {
        self.elo = elo;
        self
    }

    fn session(&self) -> MutexGuard<'_, EvalSession> {
        self.session.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
    }
}

/// One blinded side of a trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rendering {
    pub label: String,
    pub text: String,
    pub paragraphs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ResponseSchema {
    Choice { options: Vec<String> },
    Rating { min: u8, max: u8, labels: BTreeMap<String, String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialPayload {
    pub trial_id: String,
    pub mode: Mode,
    pub doc_id: String,
    pub renderings: Vec<Rendering>,
    pub response: ResponseSchema,
}

impl TrialPayload {
    fn new(trial: &Trial, study: &Study) -> Self {
        let renderings = trial
            .systems
            .iter()
            .zip(["A", "B"])
            .map(|(system, label)| {
                let text = study.text(system, &trial.doc_id);
                Rendering {
                    label: label.to_string(),
                    paragraphs: split_paragraphs(text).into_iter().map(str::to_string).collect(),
                    text: text.to_string(),
                }
            })
            .collect();
        let response = match trial.mode {
            Mode::Ab => ResponseSchema::Choice {
                options: vec!["A".into(), "B".into(), "TIE".into()],
            },
            Mode::Likert => ResponseSchema::Rating {
                min: 1,
                max: 5,
                labels: BTreeMap::from([("1".into(), "Poor".into()), ("5".into(), "Excellent".into())]),
            },
        };
        Self {
            trial_id: trial.trial_id.clone(),
            mode: trial.mode,
            doc_id: trial.doc_id.clone(),
            renderings,
            response,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    pub status: String,
    pub trial_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EloEntry {
    pub system: String,
    pub rating: f64,
    pub n: usize,
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EloResults {
    pub k: f64,
    pub initial: f64,
    /// Highest rating first.
    pub systems: Vec<EloEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikertEntry {
    pub system: String,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikertResults {
    pub systems: Vec<LikertEntry>,
}

#[derive(Debug, Serialize)]
struct ApiError {
    #[serde(skip)]
    status: StatusCode,
    error: String,
}

impl ApiError {
    fn new(status: StatusCode, error: impl ToString) -> Self {
        Self {
            status,
            error: error.to_string(),
        }
    }
}

impl From<HumanEvalError> for ApiError {
    fn from(e: HumanEvalError) -> Self {
        let status = match &e {
            HumanEvalError::DuplicateTrial(_) => StatusCode::CONFLICT,
            HumanEvalError::UnknownTrial(_) => StatusCode::NOT_FOUND,
            HumanEvalError::WrongParticipant { .. } => StatusCode::FORBIDDEN,
            HumanEvalError::Invalid { .. }
            | HumanEvalError::EmptyParticipant
            | HumanEvalError::UnknownMode(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(&self)).into_response()
    }
}

#[derive(Debug, Deserialize)]
struct TrialQuery {
    participant: Option<String>,
    mode: Option<String>,
}

async fn get_trial(
    State(state): State<Arc<AppState>>,
    query: Result<Query<TrialQuery>, QueryRejection>,
) -> Result<Response, ApiError> {
    let Query(query) = query.map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.body_text()))?;
    let participant = query.participant.unwrap_or_default();
    let mode: Mode = query
        .mode
        .as_deref()
        .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "missing mode"))?
        .parse()?;
    let now = (state.clock)();
    let trial = state.session().issue(&participant, mode, now)?;
    Ok(match trial {
        Some(trial) => Json(TrialPayload::new(&trial, &state.study)).into_response(),
        None => StatusCode::NO_CONTENT.into_response(),
    })
}

async fn post_judgment(
    State(state): State<Arc<AppState>>,
    body: Result<Json<Submission>, JsonRejection>,
) -> Result<Json<Ack>, ApiError> {
    let Json(submission) = body.map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.body_text()))?;
    let now = (state.clock)();
    let judgment = state.session().record(submission, now)?;
    Ok(Json(Ack {
        status: "ok".into(),
        trial_id: judgment.trial_id,
    }))
}

async fn results_elo(State(state): State<Arc<AppState>>) -> Json<EloResults> {
    let judgments = state.session().judgments().to_vec();
    let mut systems: Vec<EloEntry> = compute_elo(&judgments, state.elo)
        .into_iter()
        .map(|(system, r)| EloEntry {
            system,
            rating: r.rating,
            n: r.n,
            wins: r.wins,
            losses: r.losses,
            ties: r.ties,
        })
        .collect();
    systems.sort_by(|a, b| b.rating.total_cmp(&a.rating).then_with(|| a.system.cmp(&b.system)));
    Json(EloResults {
        k: state.elo.k,
        initial: state.elo.initial,
        systems,
    })
}

async fn results_likert(State(state): State<Arc<AppState>>) -> Json<LikertResults> {
    let judgments = state.session().judgments().to_vec();
    let systems = compute_likert(&judgments)
        .map(|table| {
            table
                .into_iter()
                .map(|(system, r)| LikertEntry {
                    system,
                    mean: r.mean,
                    std: r.std,
                    n: r.n,
                })
                .collect()
        })
        .unwrap_or_default();
    Json(LikertResults { systems })
}

/// Builds the router. `cors_origin` of `None` or `"*"` allows any origin.
pub fn router(state: Arc<AppState>, cors_origin: Option<&str>) -> Result<Router, ServiceError> {
    let cors = CorsLayer::new().allow_methods(Any).allow_headers(Any);
    let cors = match cors_origin {
        None | Some("*") => cors.allow_origin(Any),
        Some(origin) => cors.allow_origin(
            origin
                .parse::<HeaderValue>()
                .map_err(|_| ServiceError::CorsOrigin(origin.to_string()))?,
        ),
    };
    Ok(Router::new()
        .route("/api/trial", get(get_trial))
        .route("/api/judgment", post(post_judgment))
        .route("/api/results/elo", get(results_elo))
        .route("/api/results/likert", get(results_likert))
        .layer(cors)
        .with_state(state))
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub addr: SocketAddr,
    pub store: PathBuf,
    pub systems_manifest: PathBuf,
    pub documents_manifest: PathBuf,
    /// Idle time after which an unanswered trial returns to the pool.
    pub trial_expiry: Duration,
    pub cors_origin: Option<String>,
    /// Fixed sampler seed; drawn from the OS when absent.
    pub seed: Option<u64>,
}

/// Loads the study, replays the store and returns the ready state.
pub fn build_state(config: &ServiceConfig) -> Result<AppState, ServiceError> {
    let study = Study::load(&config.systems_manifest, &config.documents_manifest)?;
    let (docs, systems) = (study.docs().to_vec(), study.systems().to_vec());
    let sampler = match config.seed {
        Some(seed) => Sampler::new(docs, systems, seed),
        None => Sampler::from_os_rng(docs, systems),
    };
    let store = JudgmentStore::open(&config.store)?;
    let session = EvalSession::new(sampler, store, config.trial_expiry)?;
    Ok(AppState::new(session, study))
}

/// Serves until Ctrl-C.
pub async fn serve(config: ServiceConfig) -> Result<(), ServiceError> {
    let state = Arc::new(build_state(&config)?);
    let app = router(state, config.cors_origin.as_deref())?;
    let io = |source| ServiceError::Io {
        path: config.addr.to_string(),
        source,
    };
    let listener = tokio::net::TcpListener::bind(config.addr).await.map_err(io)?;
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(io)
}
