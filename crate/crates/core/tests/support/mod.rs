//! Reference implementations used as test oracles. They are written for
//! clarity, not speed, and share no code with the library.

#![allow(dead_code)]

use std::collections::BTreeSet;

/// Sorted boundary positions of a mass sequence: the index of the last
/// sentence of every segment but the final one.
pub fn boundaries(masses: &[usize]) -> BTreeSet<usize> {
    let mut out = BTreeSet::new();
    let mut end = 0;
    for &m in &masses[..masses.len() - 1] {
        end += m;
        out.insert(end - 1);
    }
    out
}

/// `L / (2 * segments)` rounded half to even with integer arithmetic, at
/// least 1.
pub fn pk_window(reference: &[usize]) -> usize {
    let total: usize = reference.iter().sum();
    let den = 2 * reference.len();
    let (q, r) = (total / den, total % den);
    let rounded = match (2 * r).cmp(&den) {
        std::cmp::Ordering::Less => q,
        std::cmp::Ordering::Greater => q + 1,
        std::cmp::Ordering::Equal => q + q % 2,
    };
    rounded.max(1)
}

/// Sentences `i < j` share a segment when no boundary lies in `i..j`.
fn together(bounds: &BTreeSet<usize>, i: usize, j: usize) -> bool {
    bounds.range(i..j).next().is_none()
}

/// P_k by enumerating every probe pair.
pub fn pk(reference: &[usize], hypothesis: &[usize]) -> f64 {
    let total: usize = reference.iter().sum();
    let k = pk_window(reference);
    let (rb, hb) = (boundaries(reference), boundaries(hypothesis));
    let mut probes = 0usize;
    let mut errors = 0usize;
    for i in 0..total {
        let j = i + k;
        if j >= total {
            break;
        }
        probes += 1;
        if together(&rb, i, j) != together(&hb, i, j) {
            errors += 1;
        }
    }
    errors as f64 / probes as f64
}

fn score(additions: usize, transpositions: &[usize], matches: usize, n_t: usize) -> f64 {
    let denominator = additions + transpositions.len() + matches;
    if denominator == 0 {
        return 1.0;
    }
    let weight: f64 = transpositions.iter().map(|&d| d as f64 / n_t as f64).sum();
    1.0 - (additions as f64 + weight) / denominator as f64
}

/// Boundary Similarity maximized over every admissible set of
/// transpositions between the boundaries that do not match exactly.
pub fn boundary_similarity(reference: &[usize], hypothesis: &[usize], n_t: usize) -> f64 {
    let (rb, hb) = (boundaries(reference), boundaries(hypothesis));
    let matches = rb.intersection(&hb).count();
    let r: Vec<usize> = rb.difference(&hb).copied().collect();
    let h: Vec<usize> = hb.difference(&rb).copied().collect();

    fn search(
        r: &[usize],
        h: &[usize],
        ri: usize,
        used: &mut Vec<bool>,
        chosen: &mut Vec<usize>,
        best: &mut f64,
        matches: usize,
        n_t: usize,
    ) {
        if ri == r.len() {
            let additions = r.len() + h.len() - 2 * chosen.len();
            *best = best.max(score(additions, chosen, matches, n_t));
            return;
        }
        // Leave r[ri] unpaired.
        search(r, h, ri + 1, used, chosen, best, matches, n_t);
        for hi in 0..h.len() {
            let d = r[ri].abs_diff(h[hi]);
            if !used[hi] && d < n_t {
                used[hi] = true;
                chosen.push(d);
                search(r, h, ri + 1, used, chosen, best, matches, n_t);
                chosen.pop();
                used[hi] = false;
            }
        }
    }

    let mut best = f64::NEG_INFINITY;
    search(&r, &h, 0, &mut vec![false; h.len()], &mut Vec::new(), &mut best, matches, n_t);
    best
}

/// Boundary F1 over break positions, with both-empty scoring 1.
pub fn f1(reference: &[usize], hypothesis: &[usize]) -> f64 {
    if reference.is_empty() && hypothesis.is_empty() {
        return 1.0;
    }
    let tp = reference.iter().filter(|p| hypothesis.contains(p)).count();
    if tp == 0 {
        return 0.0;
    }
    let precision = tp as f64 / hypothesis.len() as f64;
    let recall = tp as f64 / reference.len() as f64;
    2.0 * precision * recall / (precision + recall)
}
