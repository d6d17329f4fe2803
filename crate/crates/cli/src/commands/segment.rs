use std::collections::HashMap;
use std::time::Duration;

use paraseg::decode::{
    ConstrainedDecoder, DecodeError, DecoderConfig, DecoderState, HttpLm, LanguageModel, PromptTemplate,
    RandomLm, RetryPolicy, ScriptedLm,
};
use paraseg::ingest::DatasetRecord;
use paraseg::types::{BoundaryLabels, Transcript};
use serde::{Deserialize, Serialize};

use super::file_stem;
use crate::args::{Method, SegmentArgs};
use crate::error::{CliError, Result};
use crate::io::{is_jsonl, read_all, read_text, records, stream, Output, TextRecord};

/// A saved, resumable decoding run.
#[derive(Debug, Serialize, Deserialize)]
struct SavedState {
    id: String,
    state: DecoderState,
}

impl paraseg::ingest::Validate for SavedState {
    fn validate_record(&self) -> Result<(), paraseg::ingest::IngestError> {
        Ok(())
    }
}

enum Outcome {
    Constrained { record: DatasetRecord, labels: BoundaryLabels, text: String },
    Naive(TextRecord),
    Aborted { id: String, state: Option<DecoderState>, error: DecodeError },
}

fn language_model(args: &SegmentArgs) -> Result<Box<dyn LanguageModel>> {
    if let Some(url) = &args.lm {
        return Ok(Box::new(HttpLm::with_timeout(url, Duration::from_secs(args.timeout))));
    }
    if let Some(path) = &args.mock {
        return Ok(Box::new(ScriptedLm::load(path)?));
    }
    if let Some(seed) = args.mock_random {
        return Ok(Box::new(RandomLm::new(seed)));
    }
    Err(CliError::Usage(
        "no model: pass --lm (or PARASEG_LM_URL), --mock or --mock-random".into(),
    ))
}

struct Job<'a> {
    method: Method,
    sectionwise: bool,
    decoder: ConstrainedDecoder<'a, dyn LanguageModel>,
    resume: HashMap<String, DecoderState>,
}

impl Job<'_> {
    fn segment(&self, record: &DatasetRecord, transcript: &Transcript) -> Result<Outcome> {
        let result = match self.method {
            Method::Naive => self
                .decoder
                .naive_rewrite(transcript)
                .map(|text| Outcome::Naive(TextRecord { id: transcript.id().to_string(), text })),
            Method::Constrained => {
                let segmentation = if self.sectionwise {
                    let doc = record.segmented_document()?;
                    self.decoder.insert_paragraphs_sectionwise(&doc)
                } else if let Some(state) = self.resume.get(transcript.id()) {
                    self.decoder.resume(transcript, state.clone())
                } else {
                    self.decoder.insert_paragraphs(transcript)
                };
                match segmentation {
                    Ok(s) => {
                        let sentences: Vec<&str> = record.sentences().collect();
                        let record = DatasetRecord::from_labels(&record.id, &sentences, &s.labels)?;
                        Ok(Outcome::Constrained {
                            record,
                            labels: s.labels,
                            text: s.text,
                        })
                    }
                    Err(e) => Err(e),
                }
            }
        };
        match result {
            Ok(outcome) => Ok(outcome),
            Err(DecodeError::Aborted { boundary, state, source }) => Ok(Outcome::Aborted {
                id: transcript.id().to_string(),
                // Chapter-local states cannot be resumed against the whole document.
                state: (!self.sectionwise).then(|| (*state).clone()),
                error: DecodeError::Aborted { boundary, state, source },
            }),
            Err(error @ DecodeError::Generation(_)) => Ok(Outcome::Aborted {
                id: transcript.id().to_string(),
                state: None,
                error,
            }),
            Err(other) => Err(other.into()),
        }
    }
}

pub fn run(args: SegmentArgs, window: usize) -> Result<()> {
    let lm = language_model(&args)?;
    let template = match &args.template {
        Some(path) => PromptTemplate::load(path)?,
        None => PromptTemplate::default(),
    };
    let config = DecoderConfig {
        retry: RetryPolicy {
            attempts: args.retries.max(1),
            ..RetryPolicy::default()
        },
        max_prompt_chars: args.max_prompt_chars,
        ..DecoderConfig::default()
    };
    if args.sectionwise && args.method == Method::Naive {
        return Err(CliError::Usage("--sectionwise applies to constrained decoding only".into()));
    }
    if args.sectionwise && args.resume.is_some() {
        return Err(CliError::Usage("--resume cannot be combined with --sectionwise".into()));
    }
    let resume = match &args.resume {
        Some(path) => read_all::<SavedState>(path)?
            .into_iter()
            .map(|s| (s.id, s.state))
            .collect(),
        None => HashMap::new(),
    };
    let job = Job {
        method: args.method,
        sectionwise: args.sectionwise,
        decoder: ConstrainedDecoder::with_config(lm.as_ref(), &template, config),
        resume,
    };

    let jsonl = is_jsonl(&args.input);
    if !jsonl && args.sectionwise {
        return Err(CliError::Usage("--sectionwise needs a dataset with chapters".into()));
    }
    let mut out = Output::open(args.out.as_deref())?;
    let mut labels_out = args.labels.as_deref().map(|p| Output::open(Some(p))).transpose()?;
    let mut state_out = args.state.as_deref().map(|p| Output::open(Some(p))).transpose()?;
    let mut aborted = 0usize;

    let mut sink = |outcome: Outcome| -> Result<()> {
        match outcome {
            Outcome::Constrained { record, labels, text } => {
                if let Some(l) = labels_out.as_mut() {
                    l.line(&labels)?;
                }
                if jsonl {
                    if labels_out.is_none() || args.out.is_some() {
                        out.line(&record)?;
                    }
                } else {
                    out.text(&text)?;
                    out.text("\n")?;
                }
            }
            Outcome::Naive(record) => {
                if jsonl {
                    out.line(&record)?;
                } else {
                    out.text(&record.text)?;
                    out.text("\n")?;
                }
            }
            Outcome::Aborted { id, state, error } => {
                aborted += 1;
                eprintln!("{id}: {error}");
                if let (Some(s), Some(state)) = (state_out.as_mut(), state) {
                    s.line(&SavedState { id, state })?;
                }
            }
        }
        Ok(())
    };

    if jsonl {
        let input = records::<DatasetRecord>(&args.input)?.map(|r| r.map_err(CliError::from));
        stream(
            input,
            window,
            |record: DatasetRecord| {
                let transcript = record.transcript()?;
                job.segment(&record, &transcript)
            },
            &mut sink,
        )?;
    } else {
        let id = file_stem(&args.input);
        let transcript = Transcript::new(id.clone(), read_text(&args.input)?);
        let sentences: Vec<&str> = transcript.sentences().iter().map(|s| s.text.as_str()).collect();
        if sentences.is_empty() {
            return Err(CliError::Schema(format!("{id}: transcript has no sentences")));
        }
        let record = DatasetRecord::from_paragraphs(id, vec![sentences.iter().map(|s| s.to_string()).collect()]);
        sink(job.segment(&record, &transcript)?)?;
    }
    drop(sink);
    out.finish()?;
    if let Some(l) = labels_out {
        l.finish()?;
    }
    if let Some(s) = state_out {
        s.finish()?;
    }
    if aborted > 0 {
        return Err(CliError::Aborted(aborted));
    }
    Ok(())
}
