//! Corpus-level text generation metrics.
//!
//! Every metric consumes candidate/reference strings, tokenizes them with the
//! shared [`tokenize`] routine and returns a score in `[0, 1]` (CIDEr-D uses
//! the conventional `x10` scale, so it lives in `[0, 10]`).
//!
//! BERTScore is only the greedy-matching half of the metric: the caller
//! supplies a [`TokenEmbedder`] and this crate never ships an encoder.

mod bertscore;
mod bleu;
mod cider;
mod meteor;
mod ngram;
mod report;
mod rouge;
mod stem;
mod tokenize;

pub use bertscore::{bertscore, greedy_match, BertScore, TokenEmbedder};
pub use bleu::{bleu, bleu_stats, BleuStats};
pub use cider::cider_d;
pub use meteor::{meteor, meteor_sentence, MeteorAlignment};
pub use ngram::{ngrams, NgramCounts};
pub use report::{evaluate, MetricReport};
pub use rouge::{lcs_len, rouge_l, rouge_n, Prf};
pub use stem::stem;
pub use tokenize::tokenize;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("candidate/reference lists differ in length ({candidates} vs {references})")]
    LengthMismatch { candidates: usize, references: usize },
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("n-gram order must be at least 1")]
    ZeroOrder,
    #[error("embedder returned {got} vectors for {expected} tokens")]
    EmbeddingCount { expected: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, MetricError>;

pub(crate) fn check_aligned<A, B>(candidates: &[A], references: &[B]) -> Result<()> {
    if candidates.len() != references.len() {
        return Err(MetricError::LengthMismatch {
            candidates: candidates.len(),
            references: references.len(),
        });
    }
    if candidates.is_empty() {
        return Err(MetricError::EmptyCorpus);
    }
    Ok(())
}

pub(crate) fn tokenize_all<S: AsRef<str>>(texts: &[S]) -> Vec<Vec<String>> {
    texts.iter().map(|t| tokenize(t.as_ref())).collect()
}
