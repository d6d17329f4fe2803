//! Segmentation metrics: boundary F1, P_k and Boundary Similarity.
//!
//! P_k and Boundary Similarity work on masses, i.e. segment lengths in
//! sentences. Boundary positions follow the crate convention: position `i`
//! lies between sentence `i` and sentence `i + 1`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{BoundaryLabels, Level, ModelError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("segmentations cover {reference} and {hypothesis} sentences")]
    MassMismatch { reference: usize, hypothesis: usize },
    #[error("mass sequence must be non-empty with positive entries")]
    InvalidMasses,
    #[error("document of {mass} sentences is too short for window {k}")]
    WindowTooLarge { mass: usize, k: usize },
    #[error("P_k window must be at least 1")]
    ZeroWindow,
    #[error("transposition window must be at least 2, got {0}")]
    TranspositionWindow(usize),
    #[error("document ids differ: {0} vs {1}")]
    DocMismatch(String, String),
    #[error("no documents to evaluate")]
    EmptyCorpus,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Window size of P_k, in sentences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PkWindow(usize);

impl PkWindow {
    pub fn new(k: usize) -> Result<Self, MetricError> {
        if k == 0 {
            return Err(MetricError::ZeroWindow);
        }
        Ok(Self(k))
    }

    /// Half the mean reference segment length, rounded half to even, at
    /// least 1.
    pub fn for_reference(reference: &[usize]) -> Result<Self, MetricError> {
        check_masses(reference)?;
        let total: usize = reference.iter().sum();
        let k = (total as f64 / (2.0 * reference.len() as f64)).round_ties_even() as usize;
        Ok(Self(k.max(1)))
    }

    pub fn get(self) -> usize {
        self.0
    }
}

/// Maximum distance (exclusive) at which two boundaries count as a near
/// miss in Boundary Similarity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TranspositionWindow(usize);

impl Default for TranspositionWindow {
    fn default() -> Self {
        Self(2)
    }
}

impl TranspositionWindow {
    pub fn new(n_t: usize) -> Result<Self, MetricError> {
        if n_t < 2 {
            return Err(MetricError::TranspositionWindow(n_t));
        }
        Ok(Self(n_t))
    }

    pub fn get(self) -> usize {
        self.0
    }
}

fn check_masses(masses: &[usize]) -> Result<usize, MetricError> {
    if masses.is_empty() || masses.contains(&0) {
        return Err(MetricError::InvalidMasses);
    }
    Ok(masses.iter().sum())
}

fn check_pair(reference: &[usize], hypothesis: &[usize]) -> Result<usize, MetricError> {
    let r = check_masses(reference)?;
    let h = check_masses(hypothesis)?;
    if r != h {
        return Err(MetricError::MassMismatch {
            reference: r,
            hypothesis: h,
        });
    }
    Ok(r)
}

/// Boundary positions encoded by a mass sequence.
pub fn mass_boundaries(masses: &[usize]) -> Vec<usize> {
    let mut acc = 0;
    masses[..masses.len().saturating_sub(1)]
        .iter()
        .map(|m| {
            acc += m;
            acc - 1
        })
        .collect()
}

fn segment_ids(masses: &[usize]) -> Vec<usize> {
    masses
        .iter()
        .enumerate()
        .flat_map(|(segment, &mass)| std::iter::repeat_n(segment, mass))
        .collect()
}

/// P_k: the share of probe pairs `(i, i + k)` on which the reference and
/// the hypothesis disagree about whether both sentences share a segment.
///
/// `k` defaults to [`PkWindow::for_reference`]. The reference defines the
/// window, so the metric is not symmetric.
pub fn pk(
    reference: &[usize],
    hypothesis: &[usize],
    k: Option<PkWindow>,
) -> Result<f64, MetricError> {
    pk_with_window(reference, hypothesis, k).map(|(value, _)| value)
}

/// Like [`pk`], also returning the window that was used.
pub fn pk_with_window(
    reference: &[usize],
    hypothesis: &[usize],
    k: Option<PkWindow>,
) -> Result<(f64, PkWindow), MetricError> {
    let total = check_pair(reference, hypothesis)?;
    let k = match k {
        Some(k) => k,
        None => PkWindow::for_reference(reference)?,
    };
    if total <= k.0 {
        return Err(MetricError::WindowTooLarge {
            mass: total,
            k: k.0,
        });
    }
    let (r, h) = (segment_ids(reference), segment_ids(hypothesis));
    let probes = total - k.0;
    let errors = (0..probes)
        .filter(|&i| (r[i] == r[i + k.0]) != (h[i] == h[i + k.0]))
        .count();
    Ok((errors as f64 / probes as f64, k))
}

/// Boundary edit operations between two segmentations of the same text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryEdits {
    /// Boundaries present at the same position on both sides.
    pub matches: usize,
    /// Near misses as `(reference, hypothesis)` position pairs.
    pub transpositions: Vec<(usize, usize)>,
    /// Boundaries left unmatched on either side.
    pub additions: usize,
}

impl BoundaryEdits {
    pub fn transposition_weight(&self, n_t: TranspositionWindow) -> f64 {
        self.transpositions
            .iter()
            .map(|&(r, h)| r.abs_diff(h) as f64)
            .sum::<f64>()
            / n_t.0 as f64
    }

    /// `1 - (A + w_t) / (A + T + M)`, or 1 when there are no boundaries.
    pub fn similarity(&self, n_t: TranspositionWindow) -> f64 {
        let denominator = (self.additions + self.transpositions.len() + self.matches) as f64;
        if denominator == 0.0 {
            return 1.0;
        }
        1.0 - (self.additions as f64 + self.transposition_weight(n_t)) / denominator
    }
}

/// Matches boundaries exactly, then pairs leftover boundaries closer than
/// `n_t` as transpositions, nearest first, breaking ties from the left.
/// Everything else is an addition or deletion.
pub fn boundary_edits(reference: &[usize], hypothesis: &[usize], n_t: TranspositionWindow) -> BoundaryEdits {
    let exact = reference.iter().filter(|p| hypothesis.contains(p)).count();
    let ref_left: Vec<usize> = reference
        .iter()
        .copied()
        .filter(|p| !hypothesis.contains(p))
        .collect();
    let hyp_left: Vec<usize> = hypothesis
        .iter()
        .copied()
        .filter(|p| !reference.contains(p))
        .collect();

    let mut candidates = Vec::new();
    for (ri, &r) in ref_left.iter().enumerate() {
        for (hi, &h) in hyp_left.iter().enumerate() {
            if r.abs_diff(h) < n_t.0 {
                candidates.push((ri, hi, r.abs_diff(h)));
            }
        }
    }
    // Symmetric in the two sides: distance, then leftmost position.
    candidates.sort_by_key(|&(ri, hi, d)| (d, ref_left[ri].min(hyp_left[hi])));

    let mut ref_used = vec![false; ref_left.len()];
    let mut hyp_used = vec![false; hyp_left.len()];
    let mut transpositions = Vec::new();
    for (ri, hi, _) in candidates {
        if !ref_used[ri] && !hyp_used[hi] {
            ref_used[ri] = true;
            hyp_used[hi] = true;
            transpositions.push((ref_left[ri], hyp_left[hi]));
        }
    }
    transpositions.sort_unstable();
    let additions = ref_left.len() + hyp_left.len() - 2 * transpositions.len();
    BoundaryEdits {
        matches: exact,
        transpositions,
        additions,
    }
}

/// Boundary Similarity between two mass sequences.
pub fn boundary_similarity(
    reference: &[usize],
    hypothesis: &[usize],
    n_t: TranspositionWindow,
) -> Result<f64, MetricError> {
    check_pair(reference, hypothesis)?;
    let edits = boundary_edits(&mass_boundaries(reference), &mass_boundaries(hypothesis), n_t);
    Ok(edits.similarity(n_t))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionRecall {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(numerator: usize, denominator: usize, both_empty: bool) -> f64 {
    match denominator {
        0 if both_empty => 1.0,
        0 => 0.0,
        d => numerator as f64 / d as f64,
    }
}

/// Exact-position boundary precision, recall and F1 at `level`.
///
/// With no breaks on either side all three are 1.
pub fn boundary_f1(
    reference: &BoundaryLabels,
    hypothesis: &BoundaryLabels,
    level: Level,
) -> Result<PrecisionRecall, MetricError> {
    let r = reference.indicators(level)?;
    let h = hypothesis.indicators(level)?;
    if r.len() != h.len() {
        return Err(MetricError::MassMismatch {
            reference: reference.num_sentences(),
            hypothesis: hypothesis.num_sentences(),
        });
    }
    let tp = r.iter().zip(&h).filter(|(a, b)| **a && **b).count();
    let ref_pos = r.iter().filter(|&&b| b).count();
    let hyp_pos = h.iter().filter(|&&b| b).count();
    Ok(f1_from_counts(tp, ref_pos, hyp_pos))
}

/// Precision, recall and F1 from a true-positive count and the number of
/// positives on each side.
pub fn f1_from_counts(tp: usize, ref_pos: usize, hyp_pos: usize) -> PrecisionRecall {
    let both_empty = ref_pos == 0 && hyp_pos == 0;
    let precision = ratio(tp, hyp_pos, both_empty);
    let recall = ratio(tp, ref_pos, both_empty);
    // Harmonic mean of P and R, written over counts so equal ratios give
    // bit-identical values.
    let f1 = if both_empty { 1.0 } else { 2.0 * tp as f64 / (ref_pos + hyp_pos) as f64 };
    PrecisionRecall {
        precision,
        recall,
        f1,
    }
}

/// Scores for one (reference, hypothesis) pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub pk: f64,
    pub boundary_similarity: f64,
    pub k: PkWindow,
}

pub fn evaluate_pair(
    reference: &BoundaryLabels,
    hypothesis: &BoundaryLabels,
    level: Level,
    n_t: TranspositionWindow,
) -> Result<EvalReport, MetricError> {
    let PrecisionRecall {
        precision,
        recall,
        f1,
    } = boundary_f1(reference, hypothesis, level)?;
    let ref_masses = reference.masses(level)?;
    let hyp_masses = hypothesis.masses(level)?;
    let (pk, k) = pk_with_window(&ref_masses, &hyp_masses, None)?;
    let boundary_similarity = boundary_similarity(&ref_masses, &hyp_masses, n_t)?;
    Ok(EvalReport {
        f1,
        precision,
        recall,
        pk,
        boundary_similarity,
        k,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentReport {
    pub doc_id: String,
    #[serde(flatten)]
    pub report: EvalReport,
}

/// Unweighted mean over documents.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanScores {
    pub documents: usize,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub pk: f64,
    pub boundary_similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub mean: MeanScores,
    pub documents: Vec<DocumentReport>,
}

/// Running macro average, for streaming evaluation.
#[derive(Debug, Clone, Default)]
pub struct CorpusAccumulator {
    sums: MeanScores,
}

impl CorpusAccumulator {
    pub fn add(&mut self, report: &EvalReport) {
        let s = &mut self.sums;
        s.documents += 1;
        s.f1 += report.f1;
        s.precision += report.precision;
        s.recall += report.recall;
        s.pk += report.pk;
        s.boundary_similarity += report.boundary_similarity;
    }

    pub fn finish(&self) -> Result<MeanScores, MetricError> {
        let s = self.sums;
        if s.documents == 0 {
            return Err(MetricError::EmptyCorpus);
        }
        let n = s.documents as f64;
        Ok(MeanScores {
            documents: s.documents,
            f1: s.f1 / n,
            precision: s.precision / n,
            recall: s.recall / n,
            pk: s.pk / n,
            boundary_similarity: s.boundary_similarity / n,
        })
    }
}

/// Per-document reports and their macro average.
pub fn evaluate_corpus(
    pairs: &[(BoundaryLabels, BoundaryLabels)],
    level: Level,
    n_t: TranspositionWindow,
) -> Result<CorpusReport, MetricError> {
    let mut acc = CorpusAccumulator::default();
    let mut documents = Vec::with_capacity(pairs.len());
    for (reference, hypothesis) in pairs {
        if reference.doc_id() != hypothesis.doc_id() {
            return Err(MetricError::DocMismatch(
                reference.doc_id().to_string(),
                hypothesis.doc_id().to_string(),
            ));
        }
        let report = evaluate_pair(reference, hypothesis, level, n_t)?;
        acc.add(&report);
        documents.push(DocumentReport {
            doc_id: reference.doc_id().to_string(),
            report,
        });
    }
    Ok(CorpusReport {
        mean: acc.finish()?,
        documents,
    })
}

/// Cuts a reference and a hypothesis at the reference chapter breaks and
/// returns paragraph-level pairs, one per chapter, with ids `{doc}#{n}`.
///
/// Single-sentence chapters carry no boundary to score and are skipped.
pub fn chapter_slices(
    reference: &BoundaryLabels,
    hypothesis: &BoundaryLabels,
) -> Result<Vec<(BoundaryLabels, BoundaryLabels)>, MetricError> {
    let r = reference.indicators(Level::Paragraph)?;
    let h = hypothesis.indicators(Level::Paragraph)?;
    if r.len() != h.len() {
        return Err(MetricError::MassMismatch {
            reference: reference.num_sentences(),
            hypothesis: hypothesis.num_sentences(),
        });
    }
    let masses = reference.masses(Level::Chapter)?;
    let mut out = Vec::new();
    let mut start = 0;
    for (n, mass) in masses.into_iter().enumerate() {
        // Boundaries strictly inside sentences start..start + mass.
        let inner = start..start + mass - 1;
        if mass > 1 {
            let id = format!("{}#{n}", reference.doc_id());
            out.push((
                BoundaryLabels::from_indicators(id.clone(), Level::Paragraph, &r[inner.clone()])?,
                BoundaryLabels::from_indicators(id, Level::Paragraph, &h[inner])?,
            ));
        }
        start += mass;
    }
    Ok(out)
}
