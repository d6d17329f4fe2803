use std::net::IpAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use paraseg::types::Level;

#[derive(Debug, Parser)]
#[command(name = "paraseg", version, about = "Paragraph and chapter segmentation of speech transcripts")]
pub struct Cli {
    /// Worker threads for document-parallel commands.
    #[arg(long, short = 'j', global = true, default_value_t = default_jobs())]
    pub jobs: usize,

    #[command(subcommand)]
    pub command: Command,
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Table,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LevelArg {
    Paragraph,
    Chapter,
    Hierarchical,
}

impl From<LevelArg> for Level {
    fn from(level: LevelArg) -> Level {
        match level {
            LevelArg::Paragraph => Level::Paragraph,
            LevelArg::Chapter => Level::Chapter,
            LevelArg::Hierarchical => Level::Hierarchical,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert plain-text transcripts into a JSONL dataset.
    Ingest(IngestArgs),
    /// Split text into sentences.
    Tokenize(TokenizeArgs),
    /// Insert paragraph breaks with a language model.
    Segment(SegmentArgs),
    /// Score hypotheses against references.
    Evaluate(EvaluateArgs),
    /// Produce baseline segmentations.
    Baseline(BaselineArgs),
    /// Check how faithfully outputs reproduce their sources.
    Fidelity(FidelityArgs),
    /// Pick the score threshold with the best macro F1.
    TuneThreshold(TuneArgs),
    /// Aggregate human judgments.
    Results(ResultsArgs),
    /// Run the human-evaluation HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Plain-text transcripts; paragraphs are separated by blank lines.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Document id for a single input (defaults to the file stem).
    #[arg(long)]
    pub id: Option<String>,
    /// Abbreviation list, one entry per line.
    #[arg(long)]
    pub abbreviations: Option<PathBuf>,
    /// Output file (stdout when absent).
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TokenizeArgs {
    /// Text file (stdin when absent).
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub abbreviations: Option<PathBuf>,
    /// `json` prints a JSON array; `table` one sentence per line.
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    /// Constrained decoding: only break decisions are asked of the model.
    Constrained,
    /// Free generation of the formatted text.
    Naive,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[arg(value_enum)]
    pub method: Method,
    /// A `.jsonl` dataset or a plain-text transcript.
    pub input: PathBuf,
    /// Base URL of the scoring server.
    #[arg(long, env = "PARASEG_LM_URL", conflicts_with_all = ["mock", "mock_random"])]
    pub lm: Option<String>,
    /// Scripted mock model (JSON policy file).
    #[arg(long)]
    pub mock: Option<PathBuf>,
    /// Seeded random mock model.
    #[arg(long, conflicts_with = "mock")]
    pub mock_random: Option<u64>,
    /// Prompt template (TOML with system, user and prefill).
    #[arg(long)]
    pub template: Option<PathBuf>,
    /// Decode each gold chapter on its own (dataset input only).
    #[arg(long)]
    pub sectionwise: bool,
    /// Request timeout in seconds.
    #[arg(long, default_value_t = 300)]
    pub timeout: u64,
    /// Attempts per model query before aborting.
    #[arg(long, default_value_t = 3)]
    pub retries: u32,
    /// Longest prompt accepted, in characters.
    #[arg(long)]
    pub max_prompt_chars: Option<usize>,
    /// Formatted output: text for text input, a JSONL dataset otherwise.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Boundary labels, one JSON object per document.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Where to save decoder state when a document aborts.
    #[arg(long)]
    pub state: Option<PathBuf>,
    /// Saved decoder state to continue from.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Reference labels or gold dataset (JSONL).
    #[arg(long = "ref")]
    pub reference: PathBuf,
    /// Hypothesis labels or dataset (JSONL).
    #[arg(long)]
    pub hyp: PathBuf,
    #[arg(long, value_enum, default_value_t = LevelArg::Paragraph)]
    pub level: LevelArg,
    /// Score paragraph breaks inside each reference chapter separately.
    #[arg(long)]
    pub within_chapters: bool,
    /// Boundary Similarity transposition window.
    #[arg(long, default_value_t = 2)]
    pub nt: usize,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BaselineKind {
    Random,
    Rule,
    Pbr,
    Threshold,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[arg(long, value_enum)]
    pub kind: BaselineKind,
    /// Gold dataset or plain-text transcript.
    pub input: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = LevelArg::Paragraph)]
    pub level: LevelArg,
    /// Rule period; defaults to the rounded mean paragraph length of the input.
    #[arg(long)]
    pub period: Option<usize>,
    /// Paragraph rate for hierarchical random; defaults to the input's rate.
    #[arg(long)]
    pub rate: Option<f64>,
    /// Labels to post-process with PBR.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Cue list for PBR, one parenthesized cue per line.
    #[arg(long)]
    pub cues: Option<PathBuf>,
    /// Score file for thresholding.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    #[arg(long)]
    pub tau: Option<f64>,
    /// Run metadata (kind, seed, RNG) as JSON.
    #[arg(long)]
    pub meta: Option<PathBuf>,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FidelityArgs {
    /// Source dataset (JSONL) or transcript text.
    #[arg(long)]
    pub source: PathBuf,
    /// Outputs: JSONL of `{id, text}` or datasets, or a text file.
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[arg(long)]
    pub scores: PathBuf,
    /// Gold labels or dataset.
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Aggregate {
    Elo,
    Likert,
}

#[derive(Debug, Args)]
pub struct ResultsArgs {
    #[arg(value_enum)]
    pub aggregate: Aggregate,
    #[arg(long, env = "PARASEG_STORE")]
    pub store: PathBuf,
    #[arg(long, default_value_t = 32.0)]
    pub k: f64,
    #[arg(long, default_value_t = 1000.0)]
    pub initial: f64,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    pub host: IpAddr,
    #[arg(long, default_value_t = 8080, env = "PARASEG_PORT")]
    pub port: u16,
    #[arg(long, env = "PARASEG_STORE")]
    pub store: PathBuf,
    /// TOML manifest mapping system ids to output datasets.
    #[arg(long)]
    pub systems: PathBuf,
    /// Study document ids, one per line.
    #[arg(long)]
    pub documents: PathBuf,
    /// Minutes before an unanswered trial returns to the pool.
    #[arg(long, default_value_t = 30)]
    pub expiry_minutes: i64,
    /// Allowed UI origin; any origin when absent.
    #[arg(long)]
    pub cors_origin: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}
