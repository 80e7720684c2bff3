//! Per-head scalar reference for fused attention, shared with the bench
//! acceptance suite.

use meit_core::model::Layer;
use ndarray::{s, Array2};

/// Per-head scalar loops with the literal D_h × D_h head matrices.
pub fn naive_attention(h_e: &Array2<f64>, h_t: &Array2<f64>, layer: &Layer, heads: usize, prefix_visible: bool) -> Array2<f64> {
    let (l, d) = h_t.dim();
    let le = h_e.nrows();
    let dh = d / heads;
    let mut concat = Array2::<f64>::zeros((l, d));
    for j in 0..heads {
        let w = |m: &Array2<f64>, a: usize, b: usize| m[[j * dh + a, j * dh + b]];
        let proj = |x: &[f64], m: &Array2<f64>| -> Vec<f64> {
            (0..dh).map(|b| (0..dh).map(|a| x[a] * w(m, a, b)).sum()).collect()
        };
        let text: Vec<Vec<f64>> = (0..l).map(|p| h_t.slice(s![p, j * dh..(j + 1) * dh]).to_vec()).collect();
        let ecg: Vec<Vec<f64>> = (0..le).map(|p| h_e.row(p).to_vec()).collect();
        let mut keys = Vec::new();
        let mut vals = Vec::new();
        for x in ecg.iter().chain(&text) {
            keys.push(proj(x, &layer.k.weight));
            vals.push(proj(x, &layer.v.weight));
        }
        for p in 0..l {
            let q = proj(&text[p], &layer.q.weight);
            let mut logits = Vec::new();
            for (c, k) in keys.iter().enumerate() {
                let visible = if c < le { prefix_visible } else { c - le <= p };
                if visible {
                    let dot: f64 = q.iter().zip(k).map(|(a, b)| a * b).sum();
                    logits.push((c, dot / (dh as f64).sqrt()));
                }
            }
            let m = logits.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = logits.iter().map(|x| (x.1 - m).exp()).sum();
            for b in 0..dh {
                let mut acc = 0.0;
                for &(c, s) in &logits {
                    acc += (s - m).exp() / z * vals[c][b];
                }
                concat[[p, j * dh + b]] = acc;
            }
        }
    }
    let mut out = Array2::<f64>::zeros((l, d));
    for p in 0..l {
        for o in 0..d {
            out[[p, o]] = (0..d).map(|i| concat[[p, i]] * layer.o.weight[[i, o]]).sum();
        }
    }
    out
}
