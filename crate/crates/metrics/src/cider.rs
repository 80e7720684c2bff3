use std::collections::{BTreeMap, HashMap, HashSet};

use crate::ngram::{ngrams, NgramCounts};
use crate::stem::stem;
use crate::{check_aligned, tokenize_all, Result};

const MAX_ORDER: usize = 4;
const SIGMA: f64 = 6.0;
const SCALE: f64 = 10.0;

struct TfIdf {
    weights: BTreeMap<Vec<String>, f64>,
    norm: f64,
}

fn tfidf(counts: &NgramCounts, df: &HashMap<Vec<String>, usize>, log_n: f64) -> TfIdf {
    // Ordered so the float sums below do not depend on hash order.
    let weights: BTreeMap<Vec<String>, f64> = counts
        .iter()
        .map(|(g, &tf)| {
            let d = df.get(g).copied().unwrap_or(0).max(1) as f64;
            (g.clone(), tf as f64 * (log_n - d.ln()))
        })
        .collect();
    let norm = weights.values().map(|w| w * w).sum::<f64>().sqrt();
    TfIdf { weights, norm }
}

/// Corpus CIDEr-D over stemmed n-grams (n = 1..4, σ = 6, x10 scale).
///
/// Document frequencies come from the reference side. A single-pair corpus
/// has every idf equal to zero, so it scores 0 (with a warning).
pub fn cider_d<S: AsRef<str>, R: AsRef<str>>(candidates: &[S], references: &[R]) -> Result<f64> {
    check_aligned(candidates, references)?;
    if candidates.len() < 2 {
        log::warn!("CIDEr-D on a single pair: idf is degenerate, score is 0");
    }
    let stemmed = |v: Vec<Vec<String>>| -> Vec<Vec<String>> {
        v.into_iter().map(|s| s.iter().map(|t| stem(t)).collect()).collect()
    };
    let cands = stemmed(tokenize_all(candidates));
    let refs = stemmed(tokenize_all(references));
    let log_n = (refs.len() as f64).ln();

    let mut scores = vec![0.0; cands.len()];
    for n in 1..=MAX_ORDER {
        let ref_counts: Vec<NgramCounts> = refs.iter().map(|r| ngrams(r, n)).collect();
        let mut df: HashMap<Vec<String>, usize> = HashMap::new();
        for rc in &ref_counts {
            let uniq: HashSet<&Vec<String>> = rc.keys().collect();
            for g in uniq {
                *df.entry(g.clone()).or_insert(0) += 1;
            }
        }
        for (i, (c, rc)) in cands.iter().zip(&ref_counts).enumerate() {
            let hyp = tfidf(&ngrams(c, n), &df, log_n);
            let rv = tfidf(rc, &df, log_n);
            let mut dot = 0.0;
            for (g, &hw) in &hyp.weights {
                if let Some(&rw) = rv.weights.get(g) {
                    dot += hw.min(rw) * rw;
                }
            }
            if hyp.norm != 0.0 && rv.norm != 0.0 {
                dot /= hyp.norm * rv.norm;
            }
            let delta = c.len() as f64 - refs[i].len() as f64;
            scores[i] += dot * (-(delta * delta) / (2.0 * SIGMA * SIGMA)).exp();
        }
    }
    let per_pair = scores.iter().map(|s| s / MAX_ORDER as f64 * SCALE);
    Ok(per_pair.sum::<f64>() / cands.len() as f64)
}
