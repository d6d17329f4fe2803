use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use paraseg::ingest::{gold_labels, DatasetRecord, IngestError, JsonlReader, Validate};
use paraseg::types::BoundaryLabels;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub fn is_jsonl(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("jsonl" | "ndjson")
    )
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Reads a file, or stdin when `path` is absent.
pub fn read_input(path: Option<&Path>) -> Result<String> {
    match path {
        Some(path) => read_text(path),
        None => {
            let mut text = String::new();
            io::stdin()
                .read_to_string(&mut text)
                .map_err(|e| CliError::io("<stdin>", e))?;
            Ok(text)
        }
    }
}

/// A buffered writer to `path`, or to stdout.
pub struct Output {
    name: String,
    inner: Box<dyn Write>,
}

impl Output {
    pub fn open(path: Option<&Path>) -> Result<Self> {
        Ok(match path {
            Some(path) => Self {
                name: path.display().to_string(),
                inner: Box::new(BufWriter::new(File::create(path).map_err(|e| CliError::io(path, e))?)),
            },
            None => Self {
                name: "<stdout>".into(),
                inner: Box::new(BufWriter::new(io::stdout().lock())),
            },
        })
    }

    fn fail(&self, e: io::Error) -> CliError {
        CliError::io(&self.name, e)
    }

    pub fn line<T: Serialize>(&mut self, record: &T) -> Result<()> {
        serde_json::to_writer(&mut self.inner, record).map_err(|e| self.fail(e.into()))?;
        self.inner.write_all(b"\n").map_err(|e| self.fail(e))
    }

    pub fn pretty<T: Serialize>(&mut self, value: &T) -> Result<()> {
        serde_json::to_writer_pretty(&mut self.inner, value).map_err(|e| self.fail(e.into()))?;
        self.inner.write_all(b"\n").map_err(|e| self.fail(e))
    }

    pub fn text(&mut self, text: &str) -> Result<()> {
        self.inner.write_all(text.as_bytes()).map_err(|e| self.fail(e))
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush().map_err(|e| self.fail(e))
    }
}

/// A labels record, or a dataset record whose gold labels are used.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum LabelLine {
    Labels(BoundaryLabels),
    Dataset(DatasetRecord),
}

impl LabelLine {
    pub fn into_labels(self) -> BoundaryLabels {
        match self {
            LabelLine::Labels(labels) => labels,
            LabelLine::Dataset(record) => gold_labels(&record),
        }
    }
}

impl Validate for LabelLine {
    fn validate_record(&self) -> Result<(), IngestError> {
        match self {
            LabelLine::Labels(labels) => labels.validate_record(),
            LabelLine::Dataset(record) => record.validate_record(),
        }
    }
}

/// Formatted text keyed by document id.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TextRecord {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum TextLine {
    Text(TextRecord),
    Dataset(DatasetRecord),
}

impl Validate for TextLine {
    fn validate_record(&self) -> Result<(), IngestError> {
        match self {
            TextLine::Text(_) => Ok(()),
            TextLine::Dataset(record) => record.validate_record(),
        }
    }
}

pub fn records<T>(path: &Path) -> Result<JsonlReader<BufReader<File>, T>> {
    Ok(JsonlReader::open(path)?)
}

pub fn read_all<T: serde::de::DeserializeOwned + Validate>(path: &Path) -> Result<Vec<T>> {
    records(path)?.map(|r| r.map_err(CliError::from)).collect()
}

/// Maps `work` over a stream on the current rayon pool, handing results to
/// `sink` in input order. Only a bounded window is held in memory.
pub fn stream<T, U, I, W, S>(input: I, window: usize, work: W, mut sink: S) -> Result<()>
where
    I: Iterator<Item = Result<T>>,
    T: Send,
    U: Send,
    W: Fn(T) -> Result<U> + Sync,
    S: FnMut(U) -> Result<()>,
{
    let mut input = input.peekable();
    let window = window.max(1);
    while input.peek().is_some() {
        let batch: Vec<T> = input.by_ref().take(window).collect::<Result<_>>()?;
        let results: Vec<Result<U>> = batch.into_par_iter().map(&work).collect();
        for result in results {
            sink(result?)?;
        }
    }
    Ok(())
}
