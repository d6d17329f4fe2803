use std::collections::HashMap;

use paraseg::baselines::{
    apply_pbr, apply_threshold, document_seed, hierarchical_random, mean_paragraph_length, random_baseline,
    rule_baseline, CueLexicon, RulePeriod, Threshold, RNG_NAME,
};
use paraseg::ingest::{gold_labels, read_score_file, DatasetRecord};
use paraseg::types::{BoundaryLabels, Label, Level};
use serde_json::{json, Value};

use super::documents;
use crate::args::{BaselineArgs, BaselineKind};
use crate::error::{CliError, Result};
use crate::io::{read_all, LabelLine, Output};

fn need<'a, T>(value: Option<&'a T>, flag: &str, kind: &str) -> Result<&'a T> {
    value.ok_or_else(|| CliError::Usage(format!("--kind {kind} needs {flag}")))
}

fn corpus(args: &BaselineArgs) -> Result<Vec<DatasetRecord>> {
    let path = need(args.input.as_ref(), "an input dataset", "baseline")?;
    documents(path)?.collect()
}

/// Share of non-chapter boundaries that are paragraph breaks.
fn paragraph_rate(corpus: &[DatasetRecord]) -> f64 {
    let (para, open) = corpus
        .iter()
        .flat_map(|r| gold_labels(r).into_labels())
        .fold((0usize, 0usize), |(p, o), label| match label {
            Label::Chap => (p, o),
            Label::Para => (p + 1, o + 1),
            Label::None => (p, o + 1),
        });
    if open == 0 {
        0.0
    } else {
        para as f64 / open as f64
    }
}

pub fn run(args: BaselineArgs) -> Result<()> {
    let level = Level::from(args.level);
    let mut meta = json!({
        "kind": format!("{:?}", args.kind).to_lowercase(),
        "level": level,
    });
    let outputs: Vec<BoundaryLabels> = match args.kind {
        BaselineKind::Random => {
            let corpus = corpus(&args)?;
            meta["seed"] = json!(args.seed);
            meta["rng"] = json!(RNG_NAME);
            let rate = match level {
                Level::Hierarchical => {
                    let rate = args.rate.unwrap_or_else(|| paragraph_rate(&corpus));
                    meta["rate"] = json!(rate);
                    Some(rate)
                }
                _ => None,
            };
            corpus
                .iter()
                .map(|record| {
                    let gold = gold_labels(record);
                    let m = gold.num_sentences();
                    let seed = document_seed(args.seed, &record.id);
                    let labels = match rate {
                        Some(rate) => hierarchical_random(m, gold.count(Level::Chapter)? + 1, rate, seed)?,
                        None => random_baseline(m, gold.count(level)?, level, seed)?,
                    };
                    Ok(labels.with_doc_id(&record.id))
                })
                .collect::<Result<_>>()?
        }
        BaselineKind::Rule => {
            if level != Level::Paragraph {
                return Err(CliError::Usage("the rule baseline places paragraph breaks only".into()));
            }
            let corpus = corpus(&args)?;
            let period = match args.period {
                Some(n) => RulePeriod::new(n)?,
                None => {
                    let (mean, period) = mean_paragraph_length(&corpus)?;
                    meta["mean_paragraph_length"] = json!(mean);
                    period
                }
            };
            meta["period"] = json!(period);
            corpus
                .iter()
                .map(|record| rule_baseline(record.num_sentences(), period).with_doc_id(&record.id))
                .collect()
        }
        BaselineKind::Pbr => {
            let labels_path = need(args.labels.as_ref(), "--labels", "pbr")?;
            let lexicon = match &args.cues {
                Some(path) => CueLexicon::load(path)?,
                None => CueLexicon::default(),
            };
            meta["cues"] = json!(lexicon.patterns());
            let transcripts: HashMap<String, DatasetRecord> =
                corpus(&args)?.into_iter().map(|r| (r.id.clone(), r)).collect();
            read_all::<LabelLine>(labels_path)?
                .into_iter()
                .map(|line| {
                    let labels = line.into_labels();
                    let record = transcripts.get(labels.doc_id()).ok_or_else(|| {
                        CliError::Schema(format!("no transcript for document {:?}", labels.doc_id()))
                    })?;
                    Ok(apply_pbr(&labels, &record.transcript()?, &lexicon)?)
                })
                .collect::<Result<_>>()?
        }
        BaselineKind::Threshold => {
            let scores = need(args.scores.as_ref(), "--scores", "threshold")?;
            let tau = Threshold::new(*need(args.tau.as_ref(), "--tau", "threshold")?)?;
            meta["tau"] = json!(tau);
            read_score_file(scores)?
                .iter()
                .map(|entry| Ok(apply_threshold(entry, tau)?))
                .collect::<Result<_>>()?
        }
    };

    let mut out = Output::open(args.out.as_deref())?;
    for labels in &outputs {
        out.line(labels)?;
    }
    out.finish()?;
    if let Some(path) = &args.meta {
        meta["documents"] = Value::from(outputs.len());
        let mut m = Output::open(Some(path))?;
        m.pretty(&meta)?;
        m.finish()?;
    }
    Ok(())
}
