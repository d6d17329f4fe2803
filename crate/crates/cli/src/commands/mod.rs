mod baseline;
mod evaluate;
mod segment;

use std::net::SocketAddr;
use std::path::Path;

use paraseg::humaneval::{compute_elo, compute_likert, read_judgments, EloConfig, HumanEvalError};
use paraseg::ingest::{parse_plain_text_with, DatasetRecord};
use paraseg::senttok::{AbbreviationList, Tokenizer};
use paraseg_service::ServiceConfig;
use serde::Serialize;

use crate::args::{Aggregate, Cli, Command, Format, IngestArgs, ResultsArgs, ServeArgs, TokenizeArgs};
use crate::error::{CliError, Result};
use crate::io::{is_jsonl, read_input, read_text, records, Output};

pub fn run(cli: Cli) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs.max(1))
        .build()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let window = cli.jobs.max(1) * 4;
    pool.install(|| match cli.command {
        Command::Ingest(args) => ingest(args),
        Command::Tokenize(args) => tokenize(args),
        Command::Segment(args) => segment::run(args, window),
        Command::Evaluate(args) => evaluate::evaluate(args, window),
        Command::Baseline(args) => baseline::run(args),
        Command::Fidelity(args) => evaluate::fidelity(args),
        Command::TuneThreshold(args) => evaluate::tune(args),
        Command::Results(args) => results(args),
        Command::Serve(args) => serve(args),
    })
}

fn tokenizer(abbreviations: Option<&Path>) -> Result<Tokenizer> {
    Ok(match abbreviations {
        Some(path) => Tokenizer::new(AbbreviationList::parse(&read_text(path)?)?),
        None => Tokenizer::default(),
    })
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

/// Documents from a JSONL dataset, or a single plain-text transcript.
fn documents(path: &Path) -> Result<Box<dyn Iterator<Item = Result<DatasetRecord>>>> {
    if is_jsonl(path) {
        Ok(Box::new(records::<DatasetRecord>(path)?.map(|r| r.map_err(CliError::from))))
    } else {
        let record = parse_plain_text_with(&file_stem(path), &read_text(path)?, &Tokenizer::default())?;
        Ok(Box::new(std::iter::once(Ok(record))))
    }
}

fn ingest(args: IngestArgs) -> Result<()> {
    if args.id.is_some() && args.inputs.len() > 1 {
        return Err(CliError::Usage("--id needs exactly one input".into()));
    }
    let tokenizer = tokenizer(args.abbreviations.as_deref())?;
    let mut out = Output::open(args.out.as_deref())?;
    for path in &args.inputs {
        let id = args.id.clone().unwrap_or_else(|| file_stem(path));
        let record = parse_plain_text_with(&id, &read_text(path)?, &tokenizer)?;
        out.line(&record)?;
    }
    out.finish()
}

fn tokenize(args: TokenizeArgs) -> Result<()> {
    let tokenizer = tokenizer(args.abbreviations.as_deref())?;
    let text = read_input(args.input.as_deref())?;
    let sentences: Vec<String> = tokenizer.tokenize(&text).into_iter().map(|s| s.text).collect();
    let mut out = Output::open(args.out.as_deref())?;
    match args.format {
        Format::Json => out.line(&sentences)?,
        Format::Table => {
            for sentence in &sentences {
                out.text(sentence)?;
                out.text("\n")?;
            }
        }
    }
    out.finish()
}

#[derive(Serialize)]
struct EloRow<'a> {
    system: &'a str,
    rating: f64,
    n: usize,
    wins: usize,
    losses: usize,
    ties: usize,
}

#[derive(Serialize)]
struct LikertRow<'a> {
    system: &'a str,
    mean: f64,
    std: f64,
    n: usize,
}

fn results(args: ResultsArgs) -> Result<()> {
    let judgments = read_judgments(&args.store).map_err(|e| match e {
        HumanEvalError::Io(source) => CliError::io(&args.store, source),
        other => other.into(),
    })?;
    let mut out = Output::open(args.out.as_deref())?;
    match args.aggregate {
        Aggregate::Elo => {
            let config = EloConfig {
                k: args.k,
                initial: args.initial,
            };
            let table = compute_elo(&judgments, config);
            let mut rows: Vec<EloRow> = table
                .iter()
                .map(|(system, r)| EloRow {
                    system,
                    rating: r.rating,
                    n: r.n,
                    wins: r.wins,
                    losses: r.losses,
                    ties: r.ties,
                })
                .collect();
            rows.sort_by(|a, b| b.rating.total_cmp(&a.rating).then_with(|| a.system.cmp(b.system)));
            match args.format {
                Format::Json => out.pretty(&serde_json::json!({"k": args.k, "initial": args.initial, "systems": rows}))?,
                Format::Table => {
                    out.text(&format!("{:<24} {:>9} {:>5} {:>5} {:>5} {:>5}\n", "system", "elo", "n", "win", "loss", "tie"))?;
                    for r in &rows {
                        out.text(&format!(
                            "{:<24} {:>9.1} {:>5} {:>5} {:>5} {:>5}\n",
                            r.system, r.rating, r.n, r.wins, r.losses, r.ties
                        ))?;
                    }
                }
            }
        }
        Aggregate::Likert => {
            let table = match compute_likert(&judgments) {
                Ok(table) => table,
                Err(HumanEvalError::NoData(_)) => Default::default(),
                Err(e) => return Err(e.into()),
            };
            let rows: Vec<LikertRow> = table
                .iter()
                .map(|(system, r)| LikertRow {
                    system,
                    mean: r.mean,
                    std: r.std,
                    n: r.n,
                })
                .collect();
            match args.format {
                Format::Json => out.pretty(&serde_json::json!({"systems": rows}))?,
                Format::Table => {
                    out.text(&format!("{:<24} {:>14} {:>5}\n", "system", "rating", "n"))?;
                    for r in &rows {
                        let cell = format!("{:.2} ± {:.2}", r.mean, r.std);
                        out.text(&format!("{:<24} {:>14} {:>5}\n", r.system, cell, r.n))?;
                    }
                }
            }
        }
    }
    out.finish()
}

fn serve(args: ServeArgs) -> Result<()> {
    let config = ServiceConfig {
        addr: SocketAddr::new(args.host, args.port),
        store: args.store,
        systems_manifest: args.systems,
        documents_manifest: args.documents,
        trial_expiry: chrono::Duration::minutes(args.expiry_minutes),
        cors_origin: args.cors_origin,
        seed: args.seed,
    };
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::io("tokio runtime", e))?;
    eprintln!("listening on http://{}", config.addr);
    runtime.block_on(paraseg_service::serve(config))?;
    Ok(())
}
