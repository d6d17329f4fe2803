//! Paragraph and hierarchical segmentation of speech transcripts.
//!
//! The crate is organised around a small shared data model ([`types`]) and a
//! handful of independent stages built on top of it:
//!
//! - [`ingest`] reads and writes plain-text transcripts, line-delimited
//!   datasets, score files and split manifests.
//! - [`senttok`] is a deterministic rule-based sentence splitter.
//! - [`decode`] inserts paragraph breaks with sentence-wise constrained
//!   decoding against any language model that can score candidate
//!   continuations. The transcript text is never rewritten.
//! - [`fidelity`] checks how far a formatted output drifted from its source.
//! - [`metrics`] scores segmentations with boundary F1, P_k and Boundary
//!   Similarity.
//! - [`baselines`] provides random, periodic, cue-based and threshold
//!   segmenters.
//! - [`humaneval`] stores human judgments, samples balanced trials and
//!   aggregates ELO and Likert results.

pub mod baselines;
pub mod decode;
pub mod fidelity;
pub mod humaneval;
pub mod ingest;
pub mod metrics;
pub mod senttok;
pub mod types;

pub use types::{
    BoundaryLabels, Chapter, Label, Level, SegmentedDocument, Sentence, Transcript,
};
