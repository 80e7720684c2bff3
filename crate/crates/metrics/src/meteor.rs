//! METEOR with exact and stem matching modules (no synonym stage).
//!
//! The alignment is staged: the exact stage fixes as many identical-token
//! pairs as possible, the stem stage then pairs leftover tokens sharing a
//! stem. Among all alignments with those maximal counts the one with the
//! fewest chunks is chosen by a bounded depth-first search.

use std::collections::HashMap;

use crate::stem::stem;
use crate::{check_aligned, tokenize_all, Result};

const ALPHA_RECALL_WEIGHT: f64 = 9.0;
const PENALTY_GAMMA: f64 = 0.5;
const PENALTY_BETA: f64 = 3.0;
/// Search nodes explored before settling for the best alignment found so far.
const SEARCH_BUDGET: usize = 200_000;

/// Summary of one candidate/reference alignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeteorAlignment {
    pub exact: usize,
    pub stem: usize,
    pub chunks: usize,
}

impl MeteorAlignment {
    pub fn matches(&self) -> usize {
        self.exact + self.stem
    }
}

struct Problem<'a> {
    cand: &'a [String],
    refs: &'a [String],
    cand_stem: Vec<String>,
    ref_stem: Vec<String>,
    /// Exact pairs allowed per surface form.
    exact_cap: HashMap<&'a str, usize>,
    /// Leftover tokens per surface form on each side after the exact stage.
    cand_left: HashMap<&'a str, usize>,
    ref_left: HashMap<&'a str, usize>,
    /// Stem pairs required per stem class.
    stem_need: HashMap<String, usize>,
    exact_total: usize,
    stem_total: usize,
    /// suffix_surface[i][w]: occurrences of w in cand[i..].
    suffix_surface: Vec<HashMap<&'a str, usize>>,
    suffix_class: Vec<HashMap<String, usize>>,
}

fn count<'a>(tokens: &'a [String]) -> HashMap<&'a str, usize> {
    let mut m = HashMap::new();
    for t in tokens {
        *m.entry(t.as_str()).or_insert(0) += 1;
    }
    m
}

impl<'a> Problem<'a> {
    fn new(cand: &'a [String], refs: &'a [String]) -> Self {
        let cand_stem: Vec<String> = cand.iter().map(|t| stem(t)).collect();
        let ref_stem: Vec<String> = refs.iter().map(|t| stem(t)).collect();
        let cc = count(cand);
        let rc = count(refs);
        let mut exact_cap = HashMap::new();
        let mut exact_total = 0;
        for (w, &n) in &cc {
            let e = n.min(rc.get(w).copied().unwrap_or(0));
            exact_cap.insert(*w, e);
            exact_total += e;
        }
        let cand_left: HashMap<&str, usize> =
            cc.iter().map(|(w, &n)| (*w, n - exact_cap.get(w).copied().unwrap_or(0))).collect();
        let ref_left: HashMap<&str, usize> = rc
            .iter()
            .map(|(w, &n)| (*w, n - n.min(cc.get(w).copied().unwrap_or(0))))
            .collect();
        let mut cls_c: HashMap<String, usize> = HashMap::new();
        let mut cls_r: HashMap<String, usize> = HashMap::new();
        for (w, &n) in &cand_left {
            *cls_c.entry(stem(w)).or_insert(0) += n;
        }
        for (w, &n) in &ref_left {
            *cls_r.entry(stem(w)).or_insert(0) += n;
        }
        let mut stem_need = HashMap::new();
        let mut stem_total = 0;
        for (s, &n) in &cls_c {
            let k = n.min(cls_r.get(s).copied().unwrap_or(0));
            if k > 0 {
                stem_need.insert(s.clone(), k);
                stem_total += k;
            }
        }
        let mut suffix_surface = vec![HashMap::new(); cand.len() + 1];
        let mut suffix_class = vec![HashMap::new(); cand.len() + 1];
        for i in (0..cand.len()).rev() {
            let mut s = suffix_surface[i + 1].clone();
            *s.entry(cand[i].as_str()).or_insert(0) += 1;
            suffix_surface[i] = s;
            let mut c = suffix_class[i + 1].clone();
            *c.entry(cand_stem[i].clone()).or_insert(0) += 1;
            suffix_class[i] = c;
        }
        Problem {
            cand,
            refs,
            cand_stem,
            ref_stem,
            exact_cap,
            cand_left,
            ref_left,
            stem_need,
            exact_total,
            stem_total,
            suffix_surface,
            suffix_class,
        }
    }
}

#[derive(Clone)]
struct State<'a> {
    ref_used: Vec<bool>,
    exact_used: HashMap<&'a str, usize>,
    cand_stem_used: HashMap<&'a str, usize>,
    ref_stem_used: HashMap<&'a str, usize>,
    class_used: HashMap<String, usize>,
    exact: usize,
    stem: usize,
    last: Option<(usize, usize)>,
    chunks: usize,
}

struct Search<'p, 'a> {
    pb: &'p Problem<'a>,
    best: usize,
    nodes: usize,
}

impl<'p, 'a> Search<'p, 'a> {
    fn feasible(&self, st: &State<'a>, i: usize) -> bool {
        let pb = self.pb;
        for (w, &cap) in &pb.exact_cap {
            let need = cap - st.exact_used.get(w).copied().unwrap_or(0);
            if need > pb.suffix_surface[i].get(w).copied().unwrap_or(0) {
                return false;
            }
        }
        let mut class_exact_need: HashMap<String, usize> = HashMap::new();
        for (w, &cap) in &pb.exact_cap {
            let need = cap - st.exact_used.get(w).copied().unwrap_or(0);
            if need > 0 {
                *class_exact_need.entry(stem(w)).or_insert(0) += need;
            }
        }
        for (s, &k) in &pb.stem_need {
            let need = k - st.class_used.get(s).copied().unwrap_or(0)
                + class_exact_need.get(s).copied().unwrap_or(0);
            if need > pb.suffix_class[i].get(s).copied().unwrap_or(0) {
                return false;
            }
        }
        true
    }

    fn advance(st: &State<'a>, i: usize, j: usize) -> (Option<(usize, usize)>, usize) {
        let continues = matches!(st.last, Some((li, lj)) if li + 1 == i && lj + 1 == j);
        (Some((i, j)), if continues { st.chunks } else { st.chunks + 1 })
    }

    fn dfs(&mut self, st: &mut State<'a>, i: usize) {
        self.nodes += 1;
        if st.chunks >= self.best || self.nodes > SEARCH_BUDGET {
            return;
        }
        let pb = self.pb;
        if i == pb.cand.len() {
            if st.exact == pb.exact_total && st.stem == pb.stem_total {
                self.best = st.chunks;
            }
            return;
        }
        if !self.feasible(st, i) {
            return;
        }
        let w = pb.cand[i].as_str();
        let mut options: Vec<(usize, bool)> = Vec::new();
        if st.exact_used.get(w).copied().unwrap_or(0) < pb.exact_cap.get(w).copied().unwrap_or(0) {
            for j in 0..pb.refs.len() {
                if !st.ref_used[j] && pb.refs[j] == pb.cand[i] {
                    options.push((j, true));
                }
            }
        }
        let cs = &pb.cand_stem[i];
        let class_room = st.class_used.get(cs).copied().unwrap_or(0) < pb.stem_need.get(cs).copied().unwrap_or(0);
        if class_room
            && st.cand_stem_used.get(w).copied().unwrap_or(0) < pb.cand_left.get(w).copied().unwrap_or(0)
        {
            for j in 0..pb.refs.len() {
                let v = pb.refs[j].as_str();
                if !st.ref_used[j]
                    && v != w
                    && &pb.ref_stem[j] == cs
                    && st.ref_stem_used.get(v).copied().unwrap_or(0) < pb.ref_left.get(v).copied().unwrap_or(0)
                {
                    options.push((j, false));
                }
            }
        }
        // Try the pair that extends the current chunk first.
        if let Some((li, lj)) = st.last {
            if li + 1 == i {
                options.sort_by_key(|&(j, _)| j != lj + 1);
            }
        }
        for (j, exact) in options {
            let saved = (st.last, st.chunks);
            let (last, chunks) = Self::advance(st, i, j);
            st.last = last;
            st.chunks = chunks;
            st.ref_used[j] = true;
            let v = pb.refs[j].as_str();
            if exact {
                *st.exact_used.entry(w).or_insert(0) += 1;
                st.exact += 1;
            } else {
                *st.cand_stem_used.entry(w).or_insert(0) += 1;
                *st.ref_stem_used.entry(v).or_insert(0) += 1;
                *st.class_used.entry(cs.clone()).or_insert(0) += 1;
                st.stem += 1;
            }
            self.dfs(st, i + 1);
            if exact {
                *st.exact_used.get_mut(w).unwrap() -= 1;
                st.exact -= 1;
            } else {
                *st.cand_stem_used.get_mut(w).unwrap() -= 1;
                *st.ref_stem_used.get_mut(v).unwrap() -= 1;
                *st.class_used.get_mut(cs).unwrap() -= 1;
                st.stem -= 1;
            }
            st.ref_used[j] = false;
            st.last = saved.0;
            st.chunks = saved.1;
        }
        self.dfs(st, i + 1);
    }
}

/// Greedy left-to-right alignment with the maximal stage counts; an upper
/// bound for the search.
fn greedy_chunks(pb: &Problem<'_>) -> usize {
    let mut ref_used = vec![false; pb.refs.len()];
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    let mut exact_used: HashMap<&str, usize> = HashMap::new();
    let mut matched_c = vec![false; pb.cand.len()];
    for (i, w) in pb.cand.iter().enumerate() {
        let w = w.as_str();
        if exact_used.get(w).copied().unwrap_or(0) < pb.exact_cap.get(w).copied().unwrap_or(0) {
            if let Some(j) = (0..pb.refs.len()).find(|&j| !ref_used[j] && pb.refs[j] == w) {
                ref_used[j] = true;
                matched_c[i] = true;
                *exact_used.entry(w).or_insert(0) += 1;
                pairs.push((i, j));
            }
        }
    }
    let mut class_used: HashMap<&str, usize> = HashMap::new();
    for i in 0..pb.cand.len() {
        if matched_c[i] {
            continue;
        }
        let cs = pb.cand_stem[i].as_str();
        if class_used.get(cs).copied().unwrap_or(0) >= pb.stem_need.get(cs).copied().unwrap_or(0) {
            continue;
        }
        if let Some(j) = (0..pb.refs.len())
            .find(|&j| !ref_used[j] && pb.ref_stem[j] == cs && pb.refs[j] != pb.cand[i])
        {
            ref_used[j] = true;
            *class_used.entry(cs).or_insert(0) += 1;
            pairs.push((i, j));
        }
    }
    pairs.sort_unstable();
    count_chunks(&pairs)
}

fn count_chunks(pairs: &[(usize, usize)]) -> usize {
    if pairs.is_empty() {
        return 0;
    }
    1 + pairs
        .windows(2)
        .filter(|w| !(w[1].0 == w[0].0 + 1 && w[1].1 == w[0].1 + 1))
        .count()
}

/// Align one tokenized pair.
pub(crate) fn align(cand: &[String], refs: &[String]) -> MeteorAlignment {
    let pb = Problem::new(cand, refs);
    if pb.exact_total + pb.stem_total == 0 {
        return MeteorAlignment { exact: 0, stem: 0, chunks: 0 };
    }
    let upper = greedy_chunks(&pb);
    let mut search = Search { pb: &pb, best: upper, nodes: 0 };
    if upper > 1 {
        let mut st = State {
            ref_used: vec![false; refs.len()],
            exact_used: HashMap::new(),
            cand_stem_used: HashMap::new(),
            ref_stem_used: HashMap::new(),
            class_used: HashMap::new(),
            exact: 0,
            stem: 0,
            last: None,
            chunks: 0,
        };
        search.dfs(&mut st, 0);
    }
    MeteorAlignment { exact: pb.exact_total, stem: pb.stem_total, chunks: search.best }
}

fn score_alignment(a: MeteorAlignment, cand_len: usize, ref_len: usize) -> f64 {
    let m = a.matches();
    if m == 0 {
        return 0.0;
    }
    let p = m as f64 / cand_len as f64;
    let r = m as f64 / ref_len as f64;
    let f_mean = (1.0 + ALPHA_RECALL_WEIGHT) * p * r / (r + ALPHA_RECALL_WEIGHT * p);
    let penalty = PENALTY_GAMMA * (a.chunks as f64 / m as f64).powf(PENALTY_BETA);
    f_mean * (1.0 - penalty)
}

/// Sentence-level METEOR together with the alignment it used.
pub fn meteor_sentence(candidate: &str, reference: &str) -> (f64, MeteorAlignment) {
    let c = crate::tokenize(candidate);
    let r = crate::tokenize(reference);
    let a = align(&c, &r);
    (score_alignment(a, c.len(), r.len()), a)
}

/// Corpus METEOR: mean of sentence scores.
pub fn meteor<S: AsRef<str>, R: AsRef<str>>(candidates: &[S], references: &[R]) -> Result<f64> {
    check_aligned(candidates, references)?;
    let cands = tokenize_all(candidates);
    let refs = tokenize_all(references);
    let total: f64 = cands
        .iter()
        .zip(&refs)
        .map(|(c, r)| score_alignment(align(c, r), c.len(), r.len()))
        .sum();
    Ok(total / cands.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_four_tokens() {
        let (s, a) = meteor_sentence("a b c d", "a b c d");
        assert_eq!(a, MeteorAlignment { exact: 4, stem: 0, chunks: 1 });
        assert_eq!(s, 0.9921875);
    }

    #[test]
    fn no_common_tokens() {
        assert_eq!(meteor(&["x y"], &["a b"]).unwrap(), 0.0);
    }

    #[test]
    fn stem_stage_matches_inflections() {
        let (_, a) = meteor_sentence("running", "run");
        assert_eq!(a.stem, 1);
        let (_, a) = meteor_sentence("blocks elevated", "block elevation");
        assert!(a.matches() >= 1);
    }

    #[test]
    fn picks_fewest_chunks_among_duplicates() {
        // Greedy would pair the first "a" with ref[0] and split into 2 chunks;
        // the optimum aligns "a b" contiguously.
        let (_, a) = meteor_sentence("a x a b", "a b");
        assert_eq!(a.matches(), 2);
        assert_eq!(a.chunks, 1);
    }

    #[test]
    fn swapped_order_costs_chunks() {
        let (_, a) = meteor_sentence("c d a b", "a b c d");
        assert_eq!(a.chunks, 2);
    }
}
