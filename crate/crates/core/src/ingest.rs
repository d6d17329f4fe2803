//! Reading and writing transcripts, datasets, score files and split manifests.
//!
//! Structured files are line-delimited JSON: one record per line, UTF-8.
//! Datasets store sentences pre-tokenized so evaluation never re-runs the
//! sentence splitter on gold data.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::marker::PhantomData;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::senttok::Tokenizer;
use crate::types::{
    is_paragraph_gap, BoundaryLabels, Chapter, Label, Level, ModelError, SegmentedDocument,
    Transcript,
};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}{}: {message}", id_suffix(.id))]
    Malformed {
        line: usize,
        id: Option<String>,
        message: String,
    },
    #[error("document is empty")]
    EmptyDocument,
    #[error("record {id}: {reason}")]
    Invalid { id: String, reason: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn id_suffix(id: &Option<String>) -> String {
    id.as_ref().map(|id| format!(" (id {id})")).unwrap_or_default()
}

impl IngestError {
    fn io(path: &Path, source: io::Error) -> Self {
        IngestError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChapterRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    pub paragraphs: Vec<Vec<String>>,
}

/// One document of a dataset: chapters of paragraphs of sentences.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    pub chapters: Vec<ChapterRecord>,
}

impl DatasetRecord {
    /// A single untitled chapter.
    pub fn from_paragraphs(id: impl Into<String>, paragraphs: Vec<Vec<String>>) -> Self {
        Self {
            id: id.into(),
            chapters: vec![ChapterRecord {
                title: None,
                paragraphs,
            }],
        }
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        let invalid = |reason: &str| IngestError::Invalid {
            id: self.id.clone(),
            reason: reason.to_string(),
        };
        if self.chapters.is_empty() {
            return Err(invalid("no chapters"));
        }
        for chapter in &self.chapters {
            if chapter.paragraphs.is_empty() {
                return Err(invalid("chapter without paragraphs"));
            }
            for paragraph in &chapter.paragraphs {
                if paragraph.is_empty() {
                    return Err(invalid("empty paragraph"));
                }
                if paragraph.iter().any(|s| s.trim().is_empty()) {
                    return Err(invalid("empty sentence"));
                }
            }
        }
        Ok(())
    }

    pub fn sentences(&self) -> impl Iterator<Item = &str> {
        self.chapters
            .iter()
            .flat_map(|c| c.paragraphs.iter())
            .flat_map(|p| p.iter().map(String::as_str))
    }

    pub fn num_sentences(&self) -> usize {
        self.sentences().count()
    }

    pub fn paragraph_lengths(&self) -> impl Iterator<Item = usize> + '_ {
        self.chapters
            .iter()
            .flat_map(|c| c.paragraphs.iter().map(Vec::len))
    }

    pub fn transcript(&self) -> Result<Transcript, IngestError> {
        let sentences: Vec<&str> = self.sentences().collect();
        Ok(Transcript::from_sentences(&self.id, &sentences)?)
    }

    /// Sentence ranges of the chapters.
    pub fn chapter_spans(&self) -> Vec<Chapter> {
        let mut start = 0;
        self.chapters
            .iter()
            .map(|c| {
                let len: usize = c.paragraphs.iter().map(Vec::len).sum();
                let chapter = Chapter {
                    title: c.title.clone(),
                    sentences: start..start + len,
                };
                start += len;
                chapter
            })
            .collect()
    }

    pub fn segmented_document(&self) -> Result<SegmentedDocument, IngestError> {
        self.validate()?;
        Ok(SegmentedDocument::new(
            self.transcript()?,
            Some(gold_labels(self)),
            Some(self.chapter_spans()),
        )?)
    }

    /// Rebuilds a record from a flat sentence list and labels.
    ///
    /// Chapter-level breaks (and `CHAP` in hierarchical labels) open new
    /// chapters; paragraph breaks open new paragraphs.
    pub fn from_labels<S: AsRef<str>>(
        id: impl Into<String>,
        sentences: &[S],
        labels: &BoundaryLabels,
    ) -> Result<Self, IngestError> {
        let id = id.into();
        if sentences.is_empty() || labels.num_sentences() != sentences.len() {
            return Err(IngestError::Invalid {
                id,
                reason: format!(
                    "{} labels do not fit {} sentences",
                    labels.num_boundaries(),
                    sentences.len()
                ),
            });
        }
        let mut chapters = vec![ChapterRecord {
            title: None,
            paragraphs: vec![vec![]],
        }];
        for (i, sentence) in sentences.iter().enumerate() {
            if i > 0 {
                let label = labels.labels()[i - 1];
                let new_chapter = label == Label::Chap;
                if new_chapter {
                    chapters.push(ChapterRecord {
                        title: None,
                        paragraphs: vec![vec![]],
                    });
                } else if label == Label::Para {
                    chapters.last_mut().unwrap().paragraphs.push(vec![]);
                }
            }
            let chapter = chapters.last_mut().unwrap();
            chapter
                .paragraphs
                .last_mut()
                .unwrap()
                .push(sentence.as_ref().to_string());
        }
        Ok(Self { id, chapters })
    }
}

/// Parses a plain-text transcript. Paragraphs are separated by any
/// whitespace run with two or more newlines.
pub fn parse_plain_text(id: &str, text: &str) -> Result<DatasetRecord, IngestError> {
    parse_plain_text_with(id, text, &Tokenizer::default())
}

pub fn parse_plain_text_with(
    id: &str,
    text: &str,
    tokenizer: &Tokenizer,
) -> Result<DatasetRecord, IngestError> {
    if text.trim().is_empty() {
        return Err(IngestError::EmptyDocument);
    }
    let paragraphs = split_paragraphs(text)
        .into_iter()
        .map(|p| tokenizer.tokenize(p).into_iter().map(|s| s.text).collect())
        .collect();
    Ok(DatasetRecord::from_paragraphs(id, paragraphs))
}

/// Non-empty paragraph slices of `text`, trimmed.
pub fn split_paragraphs(text: &str) -> Vec<&str> {
    let mut paragraphs = Vec::new();
    let mut start = None;
    let mut ws_start = 0;
    let mut in_ws = false;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            if !in_ws {
                in_ws = true;
                ws_start = i;
            }
            continue;
        }
        if in_ws {
            in_ws = false;
            if let Some(s) = start {
                if is_paragraph_gap(&text[ws_start..i]) {
                    paragraphs.push(&text[s..ws_start]);
                    start = Some(i);
                }
            }
        }
        if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        paragraphs.push(text[s..].trim_end());
    }
    paragraphs
}

/// Paragraphs joined by `"\n\n"`, sentences by single spaces.
pub fn render_plain_text(record: &DatasetRecord) -> String {
    record
        .chapters
        .iter()
        .flat_map(|c| c.paragraphs.iter())
        .map(|p| p.join(" "))
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// Hierarchical gold labels: `CHAP` at chapter starts, `PARA` at the other
/// paragraph starts.
pub fn gold_labels(record: &DatasetRecord) -> BoundaryLabels {
    let mut labels = Vec::new();
    for (ci, chapter) in record.chapters.iter().enumerate() {
        for (pi, paragraph) in chapter.paragraphs.iter().enumerate() {
            for si in 0..paragraph.len() {
                if ci == 0 && pi == 0 && si == 0 {
                    continue;
                }
                labels.push(match (pi, si) {
                    (0, 0) => Label::Chap,
                    (_, 0) => Label::Para,
                    _ => Label::None,
                });
            }
        }
    }
    BoundaryLabels::new(record.id.clone(), Level::Hierarchical, labels)
        .expect("hierarchical labels accept every class")
}

/// Per-boundary break probabilities produced by an external model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreEntry {
    pub id: String,
    pub level: Level,
    pub scores: Vec<f64>,
}

impl ScoreEntry {
    pub fn validate(&self) -> Result<(), IngestError> {
        if self.level == Level::Hierarchical {
            return Err(IngestError::Invalid {
                id: self.id.clone(),
                reason: "score level must be paragraph or chapter".into(),
            });
        }
        if let Some(bad) = self
            .scores
            .iter()
            .find(|s| !(s.is_finite() && (0.0..=1.0).contains(*s)))
        {
            return Err(IngestError::Invalid {
                id: self.id.clone(),
                reason: format!("score {bad} outside [0, 1]"),
            });
        }
        Ok(())
    }

    /// Checks the entry against a document with `sentences` sentences.
    pub fn check_len(&self, sentences: usize) -> Result<(), IngestError> {
        if self.scores.len() + 1 != sentences {
            return Err(IngestError::Invalid {
                id: self.id.clone(),
                reason: format!(
                    "{} scores for a document with {sentences} sentences",
                    self.scores.len()
                ),
            });
        }
        Ok(())
    }
}

/// Partition name to document ids.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SplitManifest(pub BTreeMap<String, Vec<String>>);

impl SplitManifest {
    pub fn validate(&self) -> Result<(), IngestError> {
        let mut seen = BTreeMap::new();
        for (partition, ids) in &self.0 {
            for id in ids {
                if let Some(other) = seen.insert(id.as_str(), partition.as_str()) {
                    return Err(IngestError::Invalid {
                        id: id.clone(),
                        reason: format!("listed in both `{other}` and `{partition}`"),
                    });
                }
            }
        }
        Ok(())
    }

    /// Checks that every listed id names a known record.
    pub fn resolve<'a>(&self, known: impl IntoIterator<Item = &'a str>) -> Result<(), IngestError> {
        let known: BTreeSet<&str> = known.into_iter().collect();
        for ids in self.0.values() {
            if let Some(missing) = ids.iter().find(|id| !known.contains(id.as_str())) {
                return Err(IngestError::Invalid {
                    id: missing.clone(),
                    reason: "not present in the dataset".into(),
                });
            }
        }
        Ok(())
    }

    pub fn partition(&self, name: &str) -> Option<&[String]> {
        self.0.get(name).map(Vec::as_slice)
    }

    pub fn read(path: &Path) -> Result<Self, IngestError> {
        let text = std::fs::read_to_string(path).map_err(|e| IngestError::io(path, e))?;
        let manifest: SplitManifest =
            serde_json::from_str(&text).map_err(|e| IngestError::Malformed {
                line: e.line(),
                id: None,
                message: e.to_string(),
            })?;
        manifest.validate()?;
        Ok(manifest)
    }
}

/// Records that can check their own invariants after parsing.
pub trait Validate {
    fn validate_record(&self) -> Result<(), IngestError>;
}

impl Validate for DatasetRecord {
    fn validate_record(&self) -> Result<(), IngestError> {
        self.validate()
    }
}

impl Validate for ScoreEntry {
    fn validate_record(&self) -> Result<(), IngestError> {
        self.validate()
    }
}

impl Validate for BoundaryLabels {
    fn validate_record(&self) -> Result<(), IngestError> {
        Ok(())
    }
}

/// Streaming reader over a line-delimited file. Blank lines are skipped.
pub struct JsonlReader<R, T> {
    lines: io::Lines<R>,
    line: usize,
    _record: PhantomData<T>,
}

impl<R: BufRead, T> JsonlReader<R, T> {
    pub fn new(reader: R) -> Self {
        Self {
            lines: reader.lines(),
            line: 0,
            _record: PhantomData,
        }
    }
}

impl<T> JsonlReader<BufReader<File>, T> {
    pub fn open(path: &Path) -> Result<Self, IngestError> {
        let file = File::open(path).map_err(|e| IngestError::io(path, e))?;
        Ok(Self::new(BufReader::new(file)))
    }
}

impl<R: BufRead, T: DeserializeOwned + Validate> Iterator for JsonlReader<R, T> {
    type Item = Result<T, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let raw = match self.lines.next()? {
                Ok(raw) => raw,
                Err(e) => {
                    return Some(Err(IngestError::Malformed {
                        line: self.line + 1,
                        id: None,
                        message: e.to_string(),
                    }))
                }
            };
            self.line += 1;
            if raw.trim().is_empty() {
                continue;
            }
            let line = self.line;
            let record = serde_json::from_str::<T>(&raw)
                .map_err(|e| IngestError::Malformed {
                    line,
                    id: recover_id(&raw),
                    message: e.to_string(),
                })
                .and_then(|record| {
                    record
                        .validate_record()
                        .map_err(|e| IngestError::Malformed {
                            line,
                            id: recover_id(&raw),
                            message: e.to_string(),
                        })?;
                    Ok(record)
                });
            return Some(record);
        }
    }
}

fn recover_id(raw: &str) -> Option<String> {
    let value: serde_json::Value = serde_json::from_str(raw).ok()?;
    value
        .get("id")
        .or_else(|| value.get("doc_id"))?
        .as_str()
        .map(str::to_string)
}

pub fn read_jsonl<T: DeserializeOwned + Validate>(path: &Path) -> Result<Vec<T>, IngestError> {
    JsonlReader::open(path)?.collect()
}

pub fn write_jsonl<T: Serialize>(
    records: impl IntoIterator<Item = T>,
    path: &Path,
) -> Result<(), IngestError> {
    let file = File::create(path).map_err(|e| IngestError::io(path, e))?;
    let mut out = BufWriter::new(file);
    for record in records {
        write_jsonl_line(&mut out, &record).map_err(|e| IngestError::io(path, e))?;
    }
    out.flush().map_err(|e| IngestError::io(path, e))
}

/// Writes one record followed by a newline.
pub fn write_jsonl_line<W: Write, T: Serialize>(out: &mut W, record: &T) -> io::Result<()> {
    serde_json::to_writer(&mut *out, record)?;
    out.write_all(b"\n")
}

pub fn read_jsonl_dataset(path: &Path) -> Result<Vec<DatasetRecord>, IngestError> {
    read_jsonl(path)
}

pub fn write_jsonl_dataset(records: &[DatasetRecord], path: &Path) -> Result<(), IngestError> {
    write_jsonl(records, path)
}

pub fn read_score_file(path: &Path) -> Result<Vec<ScoreEntry>, IngestError> {
    read_jsonl(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn paragraphs(record: &DatasetRecord) -> Vec<Vec<String>> {
        record.chapters[0].paragraphs.clone()
    }

    fn strs(p: &[&[&str]]) -> Vec<Vec<String>> {
        p.iter()
            .map(|s| s.iter().map(|x| x.to_string()).collect())
            .collect()
    }

    #[test]
    fn plain_text_paragraphs() {
        let r = parse_plain_text("a", "A. B.\n\nC.").unwrap();
        assert_eq!(r.chapters.len(), 1);
        assert_eq!(paragraphs(&r), strs(&[&["A.", "B."], &["C."]]));
        assert_eq!(paragraphs(&parse_plain_text("a", "A.").unwrap()), strs(&[&["A."]]));
        assert_eq!(
            paragraphs(&parse_plain_text("a", "A.\n\n\n\nB.").unwrap()),
            strs(&[&["A."], &["B."]])
        );
        assert!(matches!(
            parse_plain_text("a", " \n\n "),
            Err(IngestError::EmptyDocument)
        ));
    }

    #[test]
    fn render_inverts_parse() {
        for (raw, canonical) in [
            ("A. B.\n\nC.", "A. B.\n\nC."),
            ("A.", "A."),
            ("A.\n\n\n\nB.", "A.\n\nB."),
            ("  A.   B.\n \n C.  ", "A. B.\n\nC."),
        ] {
            let record = parse_plain_text("x", raw).unwrap();
            let rendered = render_plain_text(&record);
            assert_eq!(rendered, canonical);
            assert_eq!(parse_plain_text("x", &rendered).unwrap(), record);
        }
    }

    #[test]
    fn gold_label_construction() {
        let one = DatasetRecord::from_paragraphs("d", strs(&[&["A.", "B."], &["C."]]));
        assert_eq!(gold_labels(&one).labels(), &[Label::None, Label::Para]);

        let two = DatasetRecord {
            id: "d".into(),
            chapters: vec![
                ChapterRecord {
                    title: Some("Intro".into()),
                    paragraphs: strs(&[&["A."]]),
                },
                ChapterRecord {
                    title: None,
                    paragraphs: strs(&[&["B."]]),
                },
            ],
        };
        assert_eq!(gold_labels(&two).labels(), &[Label::Chap]);

        let flat = DatasetRecord::from_paragraphs("d", strs(&[&["A.", "B.", "C."]]));
        assert_eq!(gold_labels(&flat).labels(), &[Label::None, Label::None]);
    }

    #[test]
    fn from_labels_inverts_gold() {
        let record = DatasetRecord {
            id: "d".into(),
            chapters: vec![
                ChapterRecord {
                    title: None,
                    paragraphs: strs(&[&["A.", "B."], &["C."]]),
                },
                ChapterRecord {
                    title: None,
                    paragraphs: strs(&[&["D."], &["E.", "F."]]),
                },
            ],
        };
        let sentences: Vec<&str> = record.sentences().collect();
        let back = DatasetRecord::from_labels("d", &sentences, &gold_labels(&record)).unwrap();
        assert_eq!(back, record);
    }

    #[test]
    fn jsonl_round_trip_is_byte_identical() {
        let line = r#"{"id":"t1","chapters":[{"title":"Intro","paragraphs":[["A.","B."],["C."]]},{"paragraphs":[["D."]]}]}"#;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        std::fs::write(&path, format!("{line}\n")).unwrap();
        let records = read_jsonl_dataset(&path).unwrap();
        assert_eq!(records.len(), 1);
        let out = dir.path().join("out.jsonl");
        write_jsonl_dataset(&records, &out).unwrap();
        assert_eq!(std::fs::read_to_string(out).unwrap(), format!("{line}\n"));
    }

    #[test]
    fn empty_file_reads_as_empty_dataset() {
        let reader: JsonlReader<_, DatasetRecord> = JsonlReader::new(Cursor::new(""));
        assert_eq!(reader.count(), 0);
    }

    #[test]
    fn malformed_lines_report_position() {
        let input = "{\"id\":\"ok\",\"chapters\":[{\"paragraphs\":[[\"A.\"]]}]}\n\n{\"id\":\"bad\",\"chapters\":[{\"paragraphs\":[[]]}]}\n";
        let results: Vec<_> = JsonlReader::<_, DatasetRecord>::new(Cursor::new(input)).collect();
        assert!(results[0].is_ok());
        match &results[1] {
            Err(IngestError::Malformed { line, id, message }) => {
                assert_eq!(*line, 3);
                assert_eq!(id.as_deref(), Some("bad"));
                assert!(message.contains("empty paragraph"));
            }
            other => panic!("unexpected {other:?}"),
        }

        let broken: Vec<_> =
            JsonlReader::<_, DatasetRecord>::new(Cursor::new("{\"id\": 3")).collect();
        assert!(matches!(broken[0], Err(IngestError::Malformed { line: 1, id: None, .. })));
    }

    #[test]
    fn score_entries_are_validated() {
        let entry = ScoreEntry {
            id: "d".into(),
            level: Level::Paragraph,
            scores: vec![0.2, 1.2],
        };
        assert!(entry.validate().is_err());
        let ok = ScoreEntry {
            scores: vec![0.0, 1.0],
            ..entry
        };
        assert!(ok.validate().is_ok());
        assert!(ok.check_len(3).is_ok());
        assert!(ok.check_len(4).is_err());
    }

    #[test]
    fn split_manifest_rules() {
        let manifest: SplitManifest =
            serde_json::from_str(r#"{"train":["a","b"],"test":["c"]}"#).unwrap();
        assert!(manifest.validate().is_ok());
        assert!(manifest.resolve(["a", "b", "c"]).is_ok());
        assert!(manifest.resolve(["a", "b"]).is_err());
        assert_eq!(manifest.partition("test").unwrap(), ["c".to_string()]);

        let overlapping: SplitManifest =
            serde_json::from_str(r#"{"train":["a"],"test":["a"]}"#).unwrap();
        assert!(overlapping.validate().is_err());
    }

    #[test]
    fn segmented_document_from_record() {
        let record = DatasetRecord {
            id: "d".into(),
            chapters: vec![
                ChapterRecord {
                    title: None,
                    paragraphs: strs(&[&["A.", "B."]]),
                },
                ChapterRecord {
                    title: None,
                    paragraphs: strs(&[&["C."], &["D."]]),
                },
            ],
        };
        let doc = record.segmented_document().unwrap();
        assert_eq!(doc.transcript().text(), "A. B. C. D.");
        assert_eq!(doc.chapters().unwrap()[1].sentences, 2..4);
    }
}
