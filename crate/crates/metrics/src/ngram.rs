use std::collections::HashMap;

/// Multiset of n-grams, keyed by the joined token slice.
pub type NgramCounts = HashMap<Vec<String>, usize>;

/// Count all contiguous n-grams of order `n` in `tokens`.
pub fn ngrams(tokens: &[String], n: usize) -> NgramCounts {
    let mut counts = NgramCounts::new();
    if n == 0 || tokens.len() < n {
        return counts;
    }
    for window in tokens.windows(n) {
        *counts.entry(window.to_vec()).or_insert(0) += 1;
    }
    counts
}

/// Σ min(cand[g], ref[g]) over all n-grams g.
pub(crate) fn clipped_overlap(cand: &NgramCounts, reference: &NgramCounts) -> usize {
    cand.iter()
        .map(|(g, &c)| c.min(reference.get(g).copied().unwrap_or(0)))
        .sum()
}

pub(crate) fn total(counts: &NgramCounts) -> usize {
    counts.values().sum()
}
