use std::collections::BTreeMap;

use paraseg::baselines::tune_threshold;
use paraseg::fidelity::{check_fidelity, fidelity_table, FidelityReport};
use paraseg::ingest::{read_score_file, render_plain_text, DatasetRecord};
use paraseg::metrics::{
    chapter_slices, evaluate_pair, CorpusAccumulator, DocumentReport, MeanScores, TranspositionWindow,
};
use paraseg::types::{BoundaryLabels, Level};
use serde::Serialize;

use crate::args::{EvaluateArgs, FidelityArgs, Format, TuneArgs};
use crate::error::{CliError, Result};
use crate::io::{is_jsonl, read_all, read_text, records, stream, LabelLine, Output, TextLine};

fn label_map(path: &std::path::Path) -> Result<BTreeMap<String, BoundaryLabels>> {
    let mut map = BTreeMap::new();
    for line in read_all::<LabelLine>(path)? {
        let labels = line.into_labels();
        let id = labels.doc_id().to_string();
        if map.insert(id.clone(), labels).is_some() {
            return Err(CliError::Schema(format!("{}: duplicate document {id:?}", path.display())));
        }
    }
    Ok(map)
}

fn leftover<T>(map: BTreeMap<String, T>, what: &str) -> Result<()> {
    match map.keys().next() {
        Some(id) => Err(CliError::Schema(format!(
            "{what} {id:?} has no reference ({} unmatched)",
            map.len()
        ))),
        None => Ok(()),
    }
}

#[derive(Serialize)]
struct EvaluationOutput<'a> {
    level: Level,
    n_t: usize,
    within_chapters: bool,
    documents: &'a [DocumentReport],
    mean: MeanScores,
}

pub fn evaluate(args: EvaluateArgs, window: usize) -> Result<()> {
    let level = Level::from(args.level);
    if level == Level::Hierarchical {
        return Err(CliError::Usage(
            "evaluate scores one level at a time: use paragraph or chapter".into(),
        ));
    }
    if args.within_chapters && level != Level::Paragraph {
        return Err(CliError::Usage("--within-chapters scores paragraph breaks only".into()));
    }
    let n_t = TranspositionWindow::new(args.nt)?;
    let mut hyps = label_map(&args.hyp)?;

    // Pair every reference with its hypothesis up front so the parallel part
    // only does arithmetic.
    let pairs = records::<LabelLine>(&args.reference)?.map(|line| {
        let reference = line?.into_labels();
        let hypothesis = hyps.remove(reference.doc_id()).ok_or_else(|| {
            CliError::Schema(format!("no hypothesis for document {:?}", reference.doc_id()))
        })?;
        Ok((reference, hypothesis))
    });
    let mut documents = Vec::new();
    let mut acc = CorpusAccumulator::default();
    let within = args.within_chapters;
    stream(
        pairs,
        window,
        |(reference, hypothesis): (BoundaryLabels, BoundaryLabels)| {
            let units = if within {
                chapter_slices(&reference, &hypothesis)?
            } else {
                vec![(reference, hypothesis)]
            };
            units
                .into_iter()
                .map(|(r, h)| {
                    Ok(DocumentReport {
                        doc_id: r.doc_id().to_string(),
                        report: evaluate_pair(&r, &h, level, n_t)?,
                    })
                })
                .collect::<Result<Vec<_>>>()
        },
        |reports| {
            for report in reports {
                acc.add(&report.report);
                documents.push(report);
            }
            Ok(())
        },
    )?;
    leftover(hyps, "hypothesis")?;
    let mean = acc.finish()?;

    let mut out = Output::open(args.out.as_deref())?;
    match args.format {
        Format::Json => out.pretty(&EvaluationOutput {
            level,
            n_t: n_t.get(),
            within_chapters: within,
            documents: &documents,
            mean,
        })?,
        Format::Table => {
            out.text(&format!("{:<32} {:>7} {:>7} {:>7}\n", "document", "F1", "BS", "Pk"))?;
            for d in &documents {
                let r = &d.report;
                out.text(&format!(
                    "{:<32} {:>7.4} {:>7.4} {:>7.4}\n",
                    d.doc_id, r.f1, r.boundary_similarity, r.pk
                ))?;
            }
            out.text(&format!(
                "{:<32} {:>7.4} {:>7.4} {:>7.4}\n",
                format!("mean ({} documents)", mean.documents),
                mean.f1,
                mean.boundary_similarity,
                mean.pk
            ))?;
        }
    }
    out.finish()
}

#[derive(Serialize)]
struct FidelityDocument {
    id: String,
    #[serde(flatten)]
    report: FidelityReport,
}

/// The unsegmented transcript a dataset record was built from.
fn source_text(record: &DatasetRecord) -> String {
    record.sentences().collect::<Vec<_>>().join(" ")
}

pub fn fidelity(args: FidelityArgs) -> Result<()> {
    let mut documents = Vec::new();
    if is_jsonl(&args.source) {
        let mut outputs = BTreeMap::new();
        for line in read_all::<TextLine>(&args.output)? {
            let (id, text) = match line {
                TextLine::Text(t) => (t.id, t.text),
                TextLine::Dataset(d) => (d.id.clone(), render_plain_text(&d)),
            };
            outputs.insert(id, text);
        }
        for record in records::<DatasetRecord>(&args.source)? {
            let record = record?;
            let output = outputs
                .remove(&record.id)
                .ok_or_else(|| CliError::Schema(format!("no output for document {:?}", record.id)))?;
            documents.push(FidelityDocument {
                report: check_fidelity(&source_text(&record), &output)?,
                id: record.id,
            });
        }
        leftover(outputs, "output")?;
    } else {
        let source = read_text(&args.source)?;
        let output = read_text(&args.output)?;
        documents.push(FidelityDocument {
            id: super::file_stem(&args.source),
            report: check_fidelity(&source, &output)?,
        });
    }
    let reports: Vec<FidelityReport> = documents.iter().map(|d| d.report).collect();
    let row = fidelity_table(&reports)?;

    let mut out = Output::open(args.out.as_deref())?;
    match args.format {
        Format::Json => out.pretty(&serde_json::json!({"documents": documents, "summary": row}))?,
        Format::Table => {
            out.text(&format!(
                "{:>9} {:>9} {:>10} {:>10} {:>9}\n",
                "documents", "exact", "whitespace", "punct_case", "length"
            ))?;
            out.text(&format!(
                "{:>9} {:>9.3} {:>10.3} {:>10.3} {:>9.3}\n",
                row.documents, row.exact, row.whitespace, row.punct_case, row.length_5pct
            ))?;
        }
    }
    out.finish()
}

pub fn tune(args: TuneArgs) -> Result<()> {
    let mut gold = label_map(&args.gold)?;
    let mut corpus = Vec::new();
    for entry in read_score_file(&args.scores)? {
        let labels = gold
            .remove(&entry.id)
            .ok_or_else(|| CliError::Schema(format!("no gold labels for document {:?}", entry.id)))?;
        corpus.push((entry, labels));
    }
    let tuned = tune_threshold(&corpus)?;
    let mut out = Output::open(args.out.as_deref())?;
    match args.format {
        Format::Json => out.pretty(&serde_json::json!({
            "tau": tuned.tau,
            "f1": tuned.f1,
            "documents": corpus.len(),
        }))?,
        Format::Table => out.text(&format!(
            "tau {:.6}  macro F1 {:.4}  ({} documents)\n",
            tuned.tau.get(),
            tuned.f1,
            corpus.len()
        ))?,
    }
    out.finish()
}
