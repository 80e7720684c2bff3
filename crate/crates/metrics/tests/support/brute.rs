//! Naive reference implementations of the corpus metrics. Shared by the
//! metric tests and the workspace acceptance suite.
#![allow(dead_code)]

use meit_metrics::{stem, tokenize};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const WORDS: [&str; 9] = ["run", "running", "runs", "block", "blocks", "a", "b", "rate", "sinus"];
pub const TOL: f64 = 1e-9;

pub fn random_sentence(rng: &mut ChaCha8Rng, max_len: usize) -> String {
    let len = rng.random_range(1..=max_len);
    (0..len).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ")
}

pub fn random_corpus(seed: u64, max_len: usize) -> (Vec<String>, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=5);
    let c = (0..n).map(|_| random_sentence(&mut rng, max_len)).collect();
    let r = (0..n).map(|_| random_sentence(&mut rng, max_len)).collect();
    (c, r)
}

pub fn gram(t: &[String], i: usize, n: usize) -> String {
    t[i..i + n].join(" ")
}

pub fn occurrences(t: &[String], n: usize, g: &str) -> usize {
    if t.len() < n {
        return 0;
    }
    (0..=t.len() - n).filter(|&i| gram(t, i, n) == g).count()
}

// ---------------------------------------------------------------- BLEU oracle

pub fn oracle_bleu(cands: &[String], refs: &[String], order: usize) -> f64 {
    let mut log_p = 0.0;
    let (mut clen, mut rlen) = (0usize, 0usize);
    for n in 1..=order {
        let (mut num, mut den) = (0usize, 0usize);
        for (c, r) in cands.iter().zip(refs) {
            let c = tokenize(c);
            let r = tokenize(r);
            if n == 1 {
                clen += c.len();
                rlen += r.len();
            }
            if c.len() < n {
                continue;
            }
            let mut seen: Vec<String> = Vec::new();
            for i in 0..=c.len() - n {
                let g = gram(&c, i, n);
                den += 1;
                if !seen.contains(&g) {
                    num += occurrences(&c, n, &g).min(occurrences(&r, n, &g));
                    seen.push(g);
                }
            }
        }
        if num == 0 || den == 0 {
            return 0.0;
        }
        log_p += (num as f64 / den as f64).ln() / order as f64;
    }
    let bp = if clen > rlen { 1.0 } else { (1.0 - rlen as f64 / clen as f64).exp() };
    bp * log_p.exp()
}

// --------------------------------------------------------------- ROUGE oracle

pub fn oracle_rouge_n(cands: &[String], refs: &[String], n: usize) -> f64 {
    let mut total = 0.0;
    for (c, r) in cands.iter().zip(refs) {
        let c = tokenize(c);
        let r = tokenize(r);
        let ct = c.len().saturating_sub(n - 1);
        let rt = r.len().saturating_sub(n - 1);
        let mut seen: Vec<String> = Vec::new();
        let mut overlap = 0;
        for i in 0..ct {
            let g = gram(&c, i, n);
            if !seen.contains(&g) {
                overlap += occurrences(&c, n, &g).min(occurrences(&r, n, &g));
                seen.push(g);
            }
        }
        let p = if ct == 0 { 0.0 } else { overlap as f64 / ct as f64 };
        let rc = if rt == 0 { 0.0 } else { overlap as f64 / rt as f64 };
        total += if p + rc == 0.0 { 0.0 } else { 2.0 * p * rc / (p + rc) };
    }
    total / cands.len() as f64
}

pub fn is_subsequence(s: &[&String], t: &[String]) -> bool {
    let mut it = t.iter();
    s.iter().all(|x| it.any(|y| y == *x))
}

/// LCS by enumerating every subsequence of the candidate.
pub fn brute_lcs(c: &[String], r: &[String]) -> usize {
    let mut best = 0;
    for mask in 0u32..(1 << c.len()) {
        let sub: Vec<&String> = (0..c.len()).filter(|i| mask & (1 << i) != 0).map(|i| &c[i]).collect();
        if sub.len() > best && is_subsequence(&sub, r) {
            best = sub.len();
        }
    }
    best
}

pub fn oracle_rouge_l(cands: &[String], refs: &[String]) -> f64 {
    let beta2 = 1.2f64 * 1.2;
    let mut total = 0.0;
    for (c, r) in cands.iter().zip(refs) {
        let c = tokenize(c);
        let r = tokenize(r);
        let l = brute_lcs(&c, &r) as f64;
        if l == 0.0 {
            continue;
        }
        let p = l / c.len() as f64;
        let rc = l / r.len() as f64;
        total += (1.0 + beta2) * p * rc / (rc + beta2 * p);
    }
    total / cands.len() as f64
}

// -------------------------------------------------------------- METEOR oracle

/// Enumerate every partial one-to-one alignment where paired tokens share a
/// stem, then pick (max exact, max stem, min chunks) lexicographically.
pub fn oracle_meteor_pair(c: &[String], r: &[String]) -> f64 {
    let mut best: Option<(usize, usize, usize)> = None;
    let mut assign: Vec<Option<usize>> = vec![None; c.len()];
    fn rec(
        i: usize,
        c: &[String],
        r: &[String],
        used: &mut Vec<bool>,
        assign: &mut Vec<Option<usize>>,
        best: &mut Option<(usize, usize, usize)>,
    ) {
        if i == c.len() {
            let pairs: Vec<(usize, usize)> =
                assign.iter().enumerate().filter_map(|(i, a)| a.map(|j| (i, j))).collect();
            let exact = pairs.iter().filter(|(i, j)| c[*i] == r[*j]).count();
            let st = pairs.len() - exact;
            let mut chunks = 0;
            for (k, p) in pairs.iter().enumerate() {
                if k == 0 || !(p.0 == pairs[k - 1].0 + 1 && p.1 == pairs[k - 1].1 + 1) {
                    chunks += 1;
                }
            }
            let better = match best {
                None => true,
                Some((e, s, ch)) => (exact, st, std::cmp::Reverse(chunks)) > (*e, *s, std::cmp::Reverse(*ch)),
            };
            if better {
                *best = Some((exact, st, chunks));
            }
            return;
        }
        rec(i + 1, c, r, used, assign, best);
        for j in 0..r.len() {
            if !used[j] && stem(&c[i]) == stem(&r[j]) {
                used[j] = true;
                assign[i] = Some(j);
                rec(i + 1, c, r, used, assign, best);
                assign[i] = None;
                used[j] = false;
            }
        }
    }
    let mut used = vec![false; r.len()];
    rec(0, c, r, &mut used, &mut assign, &mut best);
    let (e, s, ch) = best.unwrap();
    let m = (e + s) as f64;
    if m == 0.0 {
        return 0.0;
    }
    let p = m / c.len() as f64;
    let rc = m / r.len() as f64;
    let fmean = 10.0 * p * rc / (rc + 9.0 * p);
    fmean * (1.0 - 0.5 * (ch as f64 / m).powi(3))
}

pub fn oracle_meteor(cands: &[String], refs: &[String]) -> f64 {
    cands
        .iter()
        .zip(refs)
        .map(|(c, r)| oracle_meteor_pair(&tokenize(c), &tokenize(r)))
        .sum::<f64>()
        / cands.len() as f64
}

// -------------------------------------------------------------- CIDEr oracle

pub fn oracle_cider(cands: &[String], refs: &[String]) -> f64 {
    let st = |s: &String| tokenize(s).iter().map(|t| stem(t)).collect::<Vec<_>>();
    let c: Vec<Vec<String>> = cands.iter().map(st).collect();
    let r: Vec<Vec<String>> = refs.iter().map(st).collect();
    let nn = r.len() as f64;
    let mut total = 0.0;
    for i in 0..c.len() {
        let mut score = 0.0;
        for n in 1..=4 {
            let mut vocab: Vec<String> = Vec::new();
            for s in [&c[i], &r[i]] {
                for k in 0..s.len().saturating_sub(n - 1) {
                    let g = gram(s, k, n);
                    if !vocab.contains(&g) {
                        vocab.push(g);
                    }
                }
            }
            let idf = |g: &String| {
                let df = r.iter().filter(|rr| occurrences(rr, n, g) > 0).count().max(1) as f64;
                nn.ln() - df.ln()
            };
            let hv: Vec<f64> = vocab.iter().map(|g| occurrences(&c[i], n, g) as f64 * idf(g)).collect();
            let rv: Vec<f64> = vocab.iter().map(|g| occurrences(&r[i], n, g) as f64 * idf(g)).collect();
            let hn = hv.iter().map(|x| x * x).sum::<f64>().sqrt();
            let rn = rv.iter().map(|x| x * x).sum::<f64>().sqrt();
            let mut dot: f64 = hv.iter().zip(&rv).map(|(h, q)| h.min(*q) * q).sum();
            if hn != 0.0 && rn != 0.0 {
                dot /= hn * rn;
            }
            let d = c[i].len() as f64 - r[i].len() as f64;
            score += dot * (-d * d / 72.0).exp();
        }
        total += score / 4.0 * 10.0;
    }
    total / c.len() as f64
}
