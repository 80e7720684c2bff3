use serde::{Deserialize, Serialize};

use crate::ngram::{clipped_overlap, ngrams, total};
use crate::{check_aligned, tokenize_all, MetricError, Result};

/// Precision / recall / F triple.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prf {
    pub p: f64,
    pub r: f64,
    pub f: f64,
}

impl Prf {
    fn mean(items: &[Prf]) -> Prf {
        let n = items.len() as f64;
        let (p, r, f) = items
            .iter()
            .fold((0.0, 0.0, 0.0), |acc, x| (acc.0 + x.p, acc.1 + x.r, acc.2 + x.f));
        Prf { p: p / n, r: r / n, f: f / n }
    }
}

const ROUGE_L_BETA: f64 = 1.2;

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Length of the longest common subsequence, O(|a|·|b|) time, O(|b|) space.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn rouge_n_pair(c: &[String], r: &[String], n: usize) -> Prf {
    let cn = ngrams(c, n);
    let rn = ngrams(r, n);
    let overlap = clipped_overlap(&cn, &rn);
    let p = ratio(overlap, total(&cn));
    let r = ratio(overlap, total(&rn));
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    Prf { p, r, f }
}

fn rouge_l_pair(c: &[String], r: &[String]) -> Prf {
    let l = lcs_len(c, r);
    let p = ratio(l, c.len());
    let r = ratio(l, r.len());
    let b2 = ROUGE_L_BETA * ROUGE_L_BETA;
    let f = if p == 0.0 || r == 0.0 {
        0.0
    } else {
        (1.0 + b2) * p * r / (r + b2 * p)
    };
    Prf { p, r, f }
}

/// ROUGE-N from clipped n-gram overlap, averaged over pairs.
pub fn rouge_n<S: AsRef<str>, R: AsRef<str>>(candidates: &[S], references: &[R], n: usize) -> Result<Prf> {
    check_aligned(candidates, references)?;
    if n == 0 {
        return Err(MetricError::ZeroOrder);
    }
    let cands = tokenize_all(candidates);
    let refs = tokenize_all(references);
    let per: Vec<Prf> = cands.iter().zip(&refs).map(|(c, r)| rouge_n_pair(c, r, n)).collect();
    Ok(Prf::mean(&per))
}

/// ROUGE-L (LCS based, β = 1.2), averaged over pairs.
pub fn rouge_l<S: AsRef<str>, R: AsRef<str>>(candidates: &[S], references: &[R]) -> Result<Prf> {
    check_aligned(candidates, references)?;
    let cands = tokenize_all(candidates);
    let refs = tokenize_all(references);
    let per: Vec<Prf> = cands.iter().zip(&refs).map(|(c, r)| rouge_l_pair(c, r)).collect();
    Ok(Prf::mean(&per))
}
