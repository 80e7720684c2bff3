use crate::ngram::{clipped_overlap, ngrams, total};
use crate::{check_aligned, tokenize_all, MetricError, Result};

/// Corpus-level sufficient statistics for BLEU up to some order.
#[derive(Debug, Clone, PartialEq)]
pub struct BleuStats {
    /// Clipped matches per order (index 0 is unigrams).
    pub matches: Vec<usize>,
    /// Candidate n-gram totals per order.
    pub totals: Vec<usize>,
    pub candidate_len: usize,
    pub reference_len: usize,
}

impl BleuStats {
    /// Modified precision `p_n` for order `n` (1-based).
    pub fn precision(&self, n: usize) -> f64 {
        let (m, t) = (self.matches[n - 1], self.totals[n - 1]);
        if t == 0 {
            0.0
        } else {
            m as f64 / t as f64
        }
    }

    pub fn brevity_penalty(&self) -> f64 {
        if self.candidate_len == 0 {
            0.0
        } else if self.candidate_len <= self.reference_len {
            (1.0 - self.reference_len as f64 / self.candidate_len as f64).exp()
        } else {
            1.0
        }
    }

    /// BLEU-n with uniform weights over orders `1..=n`.
    pub fn score(&self, n: usize) -> f64 {
        let mut log_sum = 0.0;
        for i in 1..=n {
            let p = self.precision(i);
            if p == 0.0 {
                return 0.0;
            }
            log_sum += p.ln();
        }
        self.brevity_penalty() * (log_sum / n as f64).exp()
    }
}

/// Accumulate clipped n-gram counts over an aligned corpus.
pub fn bleu_stats<S: AsRef<str>, R: AsRef<str>>(
    candidates: &[S],
    references: &[R],
    max_order: usize,
) -> Result<BleuStats> {
    check_aligned(candidates, references)?;
    if max_order == 0 {
        return Err(MetricError::ZeroOrder);
    }
    let cands = tokenize_all(candidates);
    let refs = tokenize_all(references);
    let mut stats = BleuStats {
        matches: vec![0; max_order],
        totals: vec![0; max_order],
        candidate_len: 0,
        reference_len: 0,
    };
    for (c, r) in cands.iter().zip(&refs) {
        stats.candidate_len += c.len();
        stats.reference_len += r.len();
        for n in 1..=max_order {
            let cn = ngrams(c, n);
            let rn = ngrams(r, n);
            stats.matches[n - 1] += clipped_overlap(&cn, &rn);
            stats.totals[n - 1] += total(&cn);
        }
    }
    Ok(stats)
}

/// Corpus BLEU-n: clipped precisions, uniform geometric mean, brevity penalty.
///
/// An empty candidate contributes zero counts rather than failing.
pub fn bleu<S: AsRef<str>, R: AsRef<str>>(candidates: &[S], references: &[R], n: usize) -> Result<f64> {
    Ok(bleu_stats(candidates, references, n)?.score(n))
}
