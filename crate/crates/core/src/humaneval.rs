//! Human evaluation: judgments, an append-only store, a balanced trial
//! sampler and ELO / Likert aggregation.
//!
//! Two study modes exist. In `ab` mode a participant sees the same document
//! segmented by two blinded systems and picks A, B or a tie. In `likert`
//! mode a single segmentation is rated from 1 to 5.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, Duration, Utc};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HumanEvalError {
    #[error("invalid judgment {trial_id}: {reason}")]
    Invalid { trial_id: String, reason: String },
    #[error("unknown or expired trial {0}")]
    UnknownTrial(String),
    #[error("trial {0} was already answered")]
    DuplicateTrial(String),
    #[error("trial {trial_id} was issued to a different participant")]
    WrongParticipant { trial_id: String },
    #[error("participant id must not be empty")]
    EmptyParticipant,
    #[error("unknown mode {0:?}, expected ab or likert")]
    UnknownMode(String),
    #[error("no likert judgments for {0}")]
    NoData(String),
    #[error("a study needs at least one document and one system")]
    EmptyPool,
    #[error("store {path} line {line}: {message}")]
    CorruptStore {
        path: String,
        line: usize,
        message: String,
    },
    #[error("store i/o: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Ab,
    Likert,
}

impl Mode {
    /// Systems shown per trial.
    pub fn arity(self) -> usize {
        match self {
            Mode::Ab => 2,
            Mode::Likert => 1,
        }
    }
}

impl FromStr for Mode {
    type Err = HumanEvalError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ab" => Ok(Mode::Ab),
            "likert" => Ok(Mode::Likert),
            other => Err(HumanEvalError::UnknownMode(other.to_string())),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Ab => "ab",
            Mode::Likert => "likert",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Choice {
    A,
    B,
    #[serde(rename = "TIE")]
    Tie,
}

/// `"A"`, `"B"`, `"TIE"` or a rating from 1 to 5.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Response {
    Choice(Choice),
    Rating(u8),
}

impl Response {
    fn fits(self, mode: Mode) -> Result<(), String> {
        match (mode, self) {
            (Mode::Ab, Response::Choice(_)) => Ok(()),
            (Mode::Likert, Response::Rating(1..=5)) => Ok(()),
            (Mode::Likert, Response::Rating(r)) => Err(format!("rating {r} outside 1..=5")),
            (Mode::Ab, Response::Rating(_)) => Err("ab trials take A, B or TIE".into()),
            (Mode::Likert, Response::Choice(_)) => Err("likert trials take a rating".into()),
        }
    }
}

/// One stored answer. For `ab`, `systems[0]` was shown as side A.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgment {
    pub trial_id: String,
    pub participant: String,
    pub mode: Mode,
    pub doc_id: String,
    pub systems: Vec<String>,
    pub response: Response,
    pub timestamp: DateTime<Utc>,
}

impl Judgment {
    pub fn validate(&self) -> Result<(), HumanEvalError> {
        let invalid = |reason: String| HumanEvalError::Invalid {
            trial_id: self.trial_id.clone(),
            reason,
        };
        if self.participant.is_empty() {
            return Err(invalid("empty participant".into()));
        }
        if self.systems.len() != self.mode.arity() {
            return Err(invalid(format!(
                "{} trials show {} systems, got {}",
                self.mode,
                self.mode.arity(),
                self.systems.len()
            )));
        }
        if self.mode == Mode::Ab && self.systems[0] == self.systems[1] {
            return Err(invalid("ab systems must differ".into()));
        }
        self.response.fits(self.mode).map_err(invalid)
    }

    /// Replay order for order-dependent aggregation.
    fn order_key(&self) -> (DateTime<Utc>, &str) {
        (self.timestamp, &self.trial_id)
    }
}

/// Append-only judgment log, one JSON object per line. Every append is
/// flushed and synced before it returns.
#[derive(Debug)]
pub struct JudgmentStore {
    path: Option<PathBuf>,
    file: Option<File>,
    judgments: Vec<Judgment>,
}

impl JudgmentStore {
    /// A store that keeps judgments only in memory.
    pub fn in_memory() -> Self {
        Self {
            path: None,
            file: None,
            judgments: Vec::new(),
        }
    }

    /// Opens or creates the log at `path` and loads its judgments. A final
    /// line without a newline is a torn write and is cut off.
    pub fn open(path: &Path) -> Result<Self, HumanEvalError> {
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(path)?;
        let (judgments, valid_len) = load(BufReader::new(&file), path)?;
        if file.metadata()?.len() != valid_len {
            file.set_len(valid_len)?;
            file.seek(SeekFrom::End(0))?;
        }
        Ok(Self {
            path: Some(path.to_path_buf()),
            file: Some(file),
            judgments,
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn judgments(&self) -> &[Judgment] {
        &self.judgments
    }

    pub fn append(&mut self, judgment: Judgment) -> Result<(), HumanEvalError> {
        judgment.validate()?;
        if let Some(file) = &mut self.file {
            let mut line = serde_json::to_string(&judgment).map_err(io::Error::other)?;
            line.push('\n');
            file.write_all(line.as_bytes())?;
            file.flush()?;
            file.sync_data()?;
        }
        self.judgments.push(judgment);
        Ok(())
    }
}

/// Judgments in the log at `path`, without modifying it. A torn final
/// line is ignored.
pub fn read_judgments(path: &Path) -> Result<Vec<Judgment>, HumanEvalError> {
    let file = File::open(path)?;
    Ok(load(BufReader::new(file), path)?.0)
}

/// Parses complete lines and returns them with the byte length they span.
fn load(mut reader: impl BufRead, path: &Path) -> Result<(Vec<Judgment>, u64), HumanEvalError> {
    let mut judgments = Vec::new();
    let mut valid_len = 0u64;
    let mut line = String::new();
    let mut number = 0;
    loop {
        line.clear();
        let read = reader.read_line(&mut line)?;
        if read == 0 || !line.ends_with('\n') {
            break;
        }
        number += 1;
        valid_len += read as u64;
        if line.trim().is_empty() {
            continue;
        }
        let corrupt = |message: String| HumanEvalError::CorruptStore {
            path: path.display().to_string(),
            line: number,
            message,
        };
        let judgment: Judgment = serde_json::from_str(&line).map_err(|e| corrupt(e.to_string()))?;
        judgment.validate().map_err(|e| corrupt(e.to_string()))?;
        judgments.push(judgment);
    }
    Ok((judgments, valid_len))
}

/// What a participant must not see twice: a document with one system or
/// one unordered system pair. System indices are sorted.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct Combination {
    doc: usize,
    systems: Vec<usize>,
}

/// Exposure counts and per-participant history.
///
/// Counts cover both answered and in-flight trials.
#[derive(Debug, Clone, Default)]
pub struct SamplerState {
    seen: HashMap<(String, Mode), BTreeSet<Combination>>,
    exposure: HashMap<Vec<usize>, usize>,
}

impl SamplerState {
    /// Exposure of one system (likert) or of one unordered pair (ab).
    fn count(&self, systems: &[usize]) -> usize {
        self.exposure.get(systems).copied().unwrap_or(0)
    }

    fn add(&mut self, participant: &str, mode: Mode, combination: Combination) -> bool {
        let fresh = self
            .seen
            .entry((participant.to_string(), mode))
            .or_default()
            .insert(combination.clone());
        if fresh {
            *self.exposure.entry(combination.systems).or_default() += 1;
        }
        fresh
    }

    fn remove(&mut self, participant: &str, mode: Mode, combination: &Combination) {
        let removed = self
            .seen
            .get_mut(&(participant.to_string(), mode))
            .is_some_and(|s| s.remove(combination));
        if removed {
            if let Some(c) = self.exposure.get_mut(&combination.systems) {
                *c -= 1;
            }
        }
    }
}

/// A trial handed to a participant. For `ab`, `systems` is in display
/// order: side A first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trial {
    pub trial_id: String,
    pub participant: String,
    pub mode: Mode,
    pub doc_id: String,
    pub systems: Vec<String>,
    pub issued_at: DateTime<Utc>,
}

/// Draws trials with probability proportional to `1 / (1 + exposure)`,
/// never repeating a combination for the same participant.
#[derive(Debug, Clone)]
pub struct Sampler {
    docs: Vec<String>,
    systems: Vec<String>,
    state: SamplerState,
    rng: ChaCha8Rng,
}

impl Sampler {
    pub fn new(docs: Vec<String>, systems: Vec<String>, seed: u64) -> Self {
        Self::with_rng(docs, systems, ChaCha8Rng::seed_from_u64(seed))
    }

    /// Seeded from the operating system.
    pub fn from_os_rng(docs: Vec<String>, systems: Vec<String>) -> Self {
        Self::with_rng(docs, systems, ChaCha8Rng::from_os_rng())
    }

    pub fn with_rng(docs: Vec<String>, systems: Vec<String>, rng: ChaCha8Rng) -> Self {
        Self {
            docs,
            systems,
            state: SamplerState::default(),
            rng,
        }
    }

    pub fn docs(&self) -> &[String] {
        &self.docs
    }

    pub fn systems(&self) -> &[String] {
        &self.systems
    }

    /// Exposure counts keyed by system (likert) or by sorted pair (ab).
    pub fn exposure(&self) -> BTreeMap<Vec<String>, usize> {
        self.state
            .exposure
            .iter()
            .filter(|(_, &n)| n > 0)
            .map(|(k, &n)| (k.iter().map(|&s| self.systems[s].clone()).collect(), n))
            .collect()
    }

    fn keys(&self, mode: Mode) -> Vec<Vec<usize>> {
        let n = self.systems.len();
        match mode {
            Mode::Likert => (0..n).map(|s| vec![s]).collect(),
            Mode::Ab => (0..n)
                .flat_map(|a| (a + 1..n).map(move |b| vec![a, b]))
                .collect(),
        }
    }

    fn combination(&self, doc_id: &str, systems: &[String]) -> Option<Combination> {
        let doc = self.docs.iter().position(|d| d == doc_id)?;
        let mut indices = systems
            .iter()
            .map(|s| self.systems.iter().position(|x| x == s))
            .collect::<Option<Vec<_>>>()?;
        indices.sort_unstable();
        Some(Combination {
            doc,
            systems: indices,
        })
    }

    /// Selection weights of every combination still open to `participant`,
    /// as `(doc, systems, weight)`.
    pub fn weights(&self, participant: &str, mode: Mode) -> Vec<(String, Vec<String>, f64)> {
        self.candidates(participant, mode)
            .into_iter()
            .map(|(c, w)| {
                let systems = c.systems.iter().map(|&s| self.systems[s].clone()).collect();
                (self.docs[c.doc].clone(), systems, w)
            })
            .collect()
    }

    fn candidates(&self, participant: &str, mode: Mode) -> Vec<(Combination, f64)> {
        let seen = self.state.seen.get(&(participant.to_string(), mode));
        let keys = self.keys(mode);
        (0..self.docs.len())
            .flat_map(|doc| {
                keys.iter().map(move |systems| Combination {
                    doc,
                    systems: systems.clone(),
                })
            })
            .filter(|c| seen.is_none_or(|s| !s.contains(c)))
            .map(|c| {
                let w = 1.0 / (1.0 + self.state.count(&c.systems) as f64);
                (c, w)
            })
            .collect()
    }

    /// Picks the next combination for `participant` and counts it as in
    /// flight. Returns `None` once the participant has seen everything.
    /// The returned systems are in display order.
    pub fn next(&mut self, participant: &str, mode: Mode) -> Option<(String, Vec<String>)> {
        let candidates = self.candidates(participant, mode);
        let index = WeightedIndex::new(candidates.iter().map(|(_, w)| *w)).ok()?;
        let chosen = candidates[index.sample(&mut self.rng)].0.clone();
        let mut systems: Vec<String> = chosen.systems.iter().map(|&s| self.systems[s].clone()).collect();
        if mode == Mode::Ab && self.rng.random_bool(0.5) {
            systems.swap(0, 1);
        }
        let doc = self.docs[chosen.doc].clone();
        self.state.add(participant, mode, chosen);
        Some((doc, systems))
    }

    /// Records a combination served elsewhere, e.g. when replaying a store.
    /// Unknown documents or systems are ignored.
    pub fn observe(&mut self, participant: &str, mode: Mode, doc_id: &str, systems: &[String]) {
        if let Some(c) = self.combination(doc_id, systems) {
            self.state.add(participant, mode, c);
        }
    }

    /// Returns an unanswered combination to the pool.
    pub fn release(&mut self, participant: &str, mode: Mode, doc_id: &str, systems: &[String]) {
        if let Some(c) = self.combination(doc_id, systems) {
            self.state.remove(participant, mode, &c);
        }
    }
}

/// Answer to an issued trial, as sent by the annotation UI.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Submission {
    pub trial_id: String,
    pub participant: String,
    pub response: Response,
}

/// The state behind a running study: sampler, in-flight trials and store.
/// Callers serialize access to it.
#[derive(Debug)]
pub struct EvalSession {
    sampler: Sampler,
    store: JudgmentStore,
    in_flight: BTreeMap<String, Trial>,
    answered: BTreeSet<String>,
    expiry: Duration,
    id_rng: ChaCha8Rng,
}

impl EvalSession {
    /// Builds a session and replays the store into the sampler.
    pub fn new(mut sampler: Sampler, store: JudgmentStore, expiry: Duration) -> Result<Self, HumanEvalError> {
        if sampler.docs().is_empty() || sampler.systems().is_empty() {
            return Err(HumanEvalError::EmptyPool);
        }
        let mut answered = BTreeSet::new();
        for j in store.judgments() {
            sampler.observe(&j.participant, j.mode, &j.doc_id, &j.systems);
            answered.insert(j.trial_id.clone());
        }
        let id_rng = ChaCha8Rng::from_rng(&mut sampler.rng);
        Ok(Self {
            sampler,
            store,
            in_flight: BTreeMap::new(),
            answered,
            expiry,
            id_rng,
        })
    }

    pub fn sampler(&self) -> &Sampler {
        &self.sampler
    }

    pub fn judgments(&self) -> &[Judgment] {
        self.store.judgments()
    }

    pub fn in_flight(&self) -> impl Iterator<Item = &Trial> {
        self.in_flight.values()
    }

    fn fresh_id(&mut self) -> String {
        loop {
            let id = format!("t{:016x}", self.id_rng.random::<u64>());
            if !self.answered.contains(&id) && !self.in_flight.contains_key(&id) {
                return id;
            }
        }
    }

    /// Issues the next trial, or `None` when the participant has judged
    /// every combination. Expired trials are released first.
    pub fn issue(&mut self, participant: &str, mode: Mode, now: DateTime<Utc>) -> Result<Option<Trial>, HumanEvalError> {
        if participant.trim().is_empty() {
            return Err(HumanEvalError::EmptyParticipant);
        }
        self.expire(now);
        let Some((doc_id, systems)) = self.sampler.next(participant, mode) else {
            return Ok(None);
        };
        let trial = Trial {
            trial_id: self.fresh_id(),
            participant: participant.to_string(),
            mode,
            doc_id,
            systems,
            issued_at: now,
        };
        self.in_flight.insert(trial.trial_id.clone(), trial.clone());
        Ok(Some(trial))
    }

    /// Validates and durably stores an answer.
    pub fn record(&mut self, submission: Submission, now: DateTime<Utc>) -> Result<Judgment, HumanEvalError> {
        if self.answered.contains(&submission.trial_id) {
            return Err(HumanEvalError::DuplicateTrial(submission.trial_id));
        }
        let trial = self
            .in_flight
            .get(&submission.trial_id)
            .ok_or_else(|| HumanEvalError::UnknownTrial(submission.trial_id.clone()))?;
        if trial.participant != submission.participant {
            return Err(HumanEvalError::WrongParticipant {
                trial_id: submission.trial_id,
            });
        }
        let judgment = Judgment {
            trial_id: trial.trial_id.clone(),
            participant: trial.participant.clone(),
            mode: trial.mode,
            doc_id: trial.doc_id.clone(),
            systems: trial.systems.clone(),
            response: submission.response,
            timestamp: now,
        };
        self.store.append(judgment.clone())?;
        self.in_flight.remove(&judgment.trial_id);
        self.answered.insert(judgment.trial_id.clone());
        Ok(judgment)
    }

    /// Drops trials idle for longer than the expiry and returns them.
    pub fn expire(&mut self, now: DateTime<Utc>) -> Vec<Trial> {
        let stale: Vec<String> = self
            .in_flight
            .values()
            .filter(|t| now - t.issued_at > self.expiry)
            .map(|t| t.trial_id.clone())
            .collect();
        stale
            .into_iter()
            .filter_map(|id| self.in_flight.remove(&id))
            .inspect(|t| {
                self.sampler
                    .release(&t.participant, t.mode, &t.doc_id, &t.systems)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EloConfig {
    pub k: f64,
    pub initial: f64,
}

impl Default for EloConfig {
    fn default() -> Self {
        Self {
            k: 32.0,
            initial: 1000.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EloRow {
    pub rating: f64,
    pub n: usize,
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
}

/// Rating updates are rounded to multiples of this, which keeps every
/// rating exactly representable and the rating sum exactly conserved.
pub const ELO_QUANTUM: f64 = 1.0 / 1_048_576.0;

pub fn expected_score(rating: f64, opponent: f64) -> f64 {
    1.0 / (1.0 + 10f64.powf((opponent - rating) / 400.0))
}

/// Sequential ELO over the `ab` judgments, replayed by timestamp with the
/// trial id as tiebreaker. Other judgments are ignored.
pub fn compute_elo(judgments: &[Judgment], config: EloConfig) -> BTreeMap<String, EloRow> {
    let mut ordered: Vec<&Judgment> = judgments.iter().filter(|j| j.mode == Mode::Ab).collect();
    ordered.sort_by(|a, b| a.order_key().cmp(&b.order_key()));
    let mut table: BTreeMap<String, EloRow> = BTreeMap::new();
    let fresh = EloRow {
        rating: config.initial,
        n: 0,
        wins: 0,
        losses: 0,
        ties: 0,
    };
    for j in ordered {
        let Response::Choice(choice) = j.response else {
            continue;
        };
        let (a, b) = (&j.systems[0], &j.systems[1]);
        let ra = table.get(a).map_or(config.initial, |r| r.rating);
        let rb = table.get(b).map_or(config.initial, |r| r.rating);
        let score = match choice {
            Choice::A => 1.0,
            Choice::B => 0.0,
            Choice::Tie => 0.5,
        };
        let delta = (config.k * (score - expected_score(ra, rb)) / ELO_QUANTUM).round() * ELO_QUANTUM;
        for (system, sign, outcome) in [(a, 1.0, score), (b, -1.0, 1.0 - score)] {
            let row = table.entry(system.clone()).or_insert(fresh);
            row.rating += sign * delta;
            row.n += 1;
            match outcome {
                1.0 => row.wins += 1,
                0.0 => row.losses += 1,
                _ => row.ties += 1,
            }
        }
    }
    table
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LikertRow {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single rating.
    pub std: f64,
    pub n: usize,
}

/// Mean and spread of likert ratings per system. Errors when there are no
/// likert judgments at all.
pub fn compute_likert(judgments: &[Judgment]) -> Result<BTreeMap<String, LikertRow>, HumanEvalError> {
    let mut ratings: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for j in judgments.iter().filter(|j| j.mode == Mode::Likert) {
        if let Response::Rating(r) = j.response {
            ratings.entry(&j.systems[0]).or_default().push(f64::from(r));
        }
    }
    if ratings.is_empty() {
        return Err(HumanEvalError::NoData("any system".into()));
    }
    Ok(ratings
        .into_iter()
        .map(|(system, values)| {
            let n = values.len();
            let mean = values.iter().sum::<f64>() / n as f64;
            let std = if n < 2 {
                0.0
            } else {
                (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            };
            (system.to_string(), LikertRow { mean, std, n })
        })
        .collect())
}

/// Likert row for one system.
pub fn likert_for(table: &BTreeMap<String, LikertRow>, system: &str) -> Result<LikertRow, HumanEvalError> {
    table
        .get(system)
        .copied()
        .ok_or_else(|| HumanEvalError::NoData(system.to_string()))
}
