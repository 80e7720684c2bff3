use serde::{Deserialize, Serialize};

use crate::{check_aligned, tokenize, MetricError, Result};

/// Maps tokens to unit-norm vectors. Implementations must return exactly
/// one vector per input token.
pub trait TokenEmbedder {
    fn embed(&self, tokens: &[String]) -> Vec<Vec<f64>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BertScore {
    pub p: f64,
    pub r: f64,
    pub f1: f64,
}

/// Greedy matching on a candidate x reference similarity matrix.
///
/// Precision averages each candidate row's maximum, recall averages each
/// reference column's maximum.
pub fn greedy_match(sim: &[Vec<f64>]) -> BertScore {
    let rows = sim.len();
    let cols = sim.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return BertScore::default();
    }
    let p = sim
        .iter()
        .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .sum::<f64>()
        / rows as f64;
    let r = (0..cols)
        .map(|j| sim.iter().map(|row| row[j]).fold(f64::NEG_INFINITY, f64::max))
        .sum::<f64>()
        / cols as f64;
    let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    BertScore { p, r, f1 }
}

fn embed_checked(embedder: &dyn TokenEmbedder, tokens: &[String]) -> Result<Vec<Vec<f64>>> {
    let v = embedder.embed(tokens);
    if v.len() != tokens.len() {
        return Err(MetricError::EmbeddingCount { expected: tokens.len(), got: v.len() });
    }
    Ok(v)
}

/// Corpus BERTScore (mean of per-pair P, R, F1) using the supplied embedder.
pub fn bertscore<S: AsRef<str>, R: AsRef<str>>(
    candidates: &[S],
    references: &[R],
    embedder: &dyn TokenEmbedder,
) -> Result<BertScore> {
    check_aligned(candidates, references)?;
    let mut acc = BertScore::default();
    for (c, r) in candidates.iter().zip(references) {
        let ct = tokenize(c.as_ref());
        let rt = tokenize(r.as_ref());
        let ce = embed_checked(embedder, &ct)?;
        let re = embed_checked(embedder, &rt)?;
        let sim: Vec<Vec<f64>> = ce
            .iter()
            .map(|a| re.iter().map(|b| a.iter().zip(b).map(|(x, y)| x * y).sum()).collect())
            .collect();
        let s = greedy_match(&sim);
        acc.p += s.p;
        acc.r += s.r;
        acc.f1 += s.f1;
    }
    let n = candidates.len() as f64;
    Ok(BertScore { p: acc.p / n, r: acc.r / n, f1: acc.f1 / n })
}
