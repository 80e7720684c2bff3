use ndarray::{s, Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::attention::PrefixVisibility;
use super::ops::{gelu, layer_norm, softmax_rows};
use super::params::ModelParams;
use crate::error::{arg, Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Decode {
    Greedy,
    TopK { k: usize, seed: u64 },
}

/// Keys and values of every layer for one generation call.
pub struct KvCache {
    k: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
    prefix_rows: usize,
    text_rows: usize,
    prefix: PrefixVisibility,
}

impl KvCache {
    /// Projects the ECG prefix through every layer's key/value maps.
    pub fn new(params: &ModelParams, h_e: &Array2<f64>, prefix: PrefixVisibility) -> Result<Self> {
        let c = &params.config;
        let e = params.tile_prefix(h_e)?;
        let (le, d) = (e.nrows(), c.model_dim());
        let mut k = Vec::new();
        let mut v = Vec::new();
        for layer in &params.layers {
            let mut kb = Array2::<f64>::zeros((le + c.max_seq_len, d));
            let mut vb = Array2::<f64>::zeros((le + c.max_seq_len, d));
            kb.slice_mut(s![..le, ..]).assign(&layer.k.apply(&e));
            vb.slice_mut(s![..le, ..]).assign(&layer.v.apply(&e));
            k.push(kb);
            v.push(vb);
        }
        Ok(KvCache { k, v, prefix_rows: le, text_rows: 0, prefix })
    }

    pub fn len(&self) -> usize {
        self.text_rows
    }

    pub fn is_empty(&self) -> bool {
        self.text_rows == 0
    }

    /// Feeds one token and returns the next-token logits.
    pub fn step(&mut self, params: &ModelParams, token: u32) -> Result<Array1<f64>> {
        let c = &params.config;
        let pos = self.text_rows;
        if pos >= c.max_seq_len {
            return Err(Error::ContextOverflow { len: pos + 1, max: c.max_seq_len });
        }
        if token as usize >= c.vocab_size {
            return Err(Error::TokenRange { id: token, vocab: c.vocab_size });
        }
        let (h, dh) = (c.num_heads, c.head_dim);
        let mut x = params.tok_emb.slice(s![token as usize..token as usize + 1, ..]).to_owned();
        x += &params.pos_emb.slice(s![pos..pos + 1, ..]);
        let row = self.prefix_rows + pos;
        let lo = if self.prefix == PrefixVisibility::Masked { self.prefix_rows } else { 0 };
        for (i, layer) in params.layers.iter().enumerate() {
            let (a, _, _) = layer_norm(&x, &layer.ln1.gamma, &layer.ln1.beta, c.ln_eps);
            let q = layer.q.apply(&a);
            self.k[i].slice_mut(s![row..row + 1, ..]).assign(&layer.k.apply(&a));
            self.v[i].slice_mut(s![row..row + 1, ..]).assign(&layer.v.apply(&a));
            let mut z = Array2::<f64>::zeros((1, h * dh));
            for j in 0..h {
                let keys = self.k[i].slice(s![lo..=row, j * dh..(j + 1) * dh]);
                let mut sc = q.slice(s![.., j * dh..(j + 1) * dh]).dot(&keys.t());
                sc /= (dh as f64).sqrt();
                softmax_rows(&mut sc);
                let vals = self.v[i].slice(s![lo..=row, j * dh..(j + 1) * dh]);
                z.slice_mut(s![.., j * dh..(j + 1) * dh]).assign(&sc.dot(&vals));
            }
            x += &layer.o.apply(&z);
            let (b, _, _) = layer_norm(&x, &layer.ln2.gamma, &layer.ln2.beta, c.ln_eps);
            let act = layer.fc1.apply(&b).mapv(gelu);
            x += &layer.fc2.apply(&act);
        }
        let (hf, _, _) = layer_norm(&x, &params.ln_f.gamma, &params.ln_f.beta, c.ln_eps);
        self.text_rows += 1;
        Ok(params.head.apply(&hf).index_axis_move(Axis(0), 0))
    }
}

fn argmax_excluding(logits: &Array1<f64>, skip: u32) -> u32 {
    let mut best = (f64::NEG_INFINITY, 0u32);
    for (i, &v) in logits.iter().enumerate() {
        if i as u32 != skip && v > best.0 {
            best = (v, i as u32);
        }
    }
    best.1
}

/// Autoregressive decoding after a prompt that ends with `marker`.
///
/// Returns the new tokens, ending with `eos_id` if it was produced within
/// `max_new_tokens`. `pad_id` is never emitted.
#[allow(clippy::too_many_arguments)]
pub fn generate(
    params: &ModelParams,
    prompt: &[u32],
    h_e: &Array2<f64>,
    decode: Decode,
    max_new_tokens: usize,
    marker: &[u32],
    eos_id: u32,
    pad_id: u32,
) -> Result<Vec<u32>> {
    generate_with(params, prompt, h_e, decode, max_new_tokens, marker, eos_id, pad_id, PrefixVisibility::Visible)
}

#[allow(clippy::too_many_arguments)]
pub fn generate_with(
    params: &ModelParams,
    prompt: &[u32],
    h_e: &Array2<f64>,
    decode: Decode,
    max_new_tokens: usize,
    marker: &[u32],
    eos_id: u32,
    pad_id: u32,
    prefix: PrefixVisibility,
) -> Result<Vec<u32>> {
    if !prompt.ends_with(marker) || prompt.is_empty() {
        return arg("prompt must end with the assistant marker");
    }
    let max = params.config.max_seq_len;
    if prompt.len() + max_new_tokens > max {
        return Err(Error::ContextOverflow { len: prompt.len() + max_new_tokens, max });
    }
    if let Decode::TopK { k: 0, .. } = decode {
        return arg("top-k needs k >= 1");
    }
    let mut cache = KvCache::new(params, h_e, prefix)?;
    let mut logits = Array1::zeros(0);
    for &t in prompt {
        logits = cache.step(params, t)?;
    }
    let mut rng = match decode {
        Decode::TopK { seed, .. } => Some(rng::stream(seed, &[0x70CC])),
        Decode::Greedy => None,
    };
    let mut out = Vec::new();
    for _ in 0..max_new_tokens {
        let next = match decode {
            Decode::Greedy => argmax_excluding(&logits, pad_id),
            Decode::TopK { k, .. } => {
                let mut idx: Vec<u32> = (0..logits.len() as u32).filter(|&i| i != pad_id).collect();
                idx.sort_by(|&a, &b| logits[b as usize].total_cmp(&logits[a as usize]).then(a.cmp(&b)));
                idx.truncate(k);
                let m = logits[idx[0] as usize];
                let w: Vec<f64> = idx.iter().map(|&i| (logits[i as usize] - m).exp()).collect();
                let total: f64 = w.iter().sum();
                let mut u = rng.as_mut().unwrap().random::<f64>() * total;
                let mut pick = idx[idx.len() - 1];
                for (&i, &wi) in idx.iter().zip(&w) {
                    if u < wi {
                        pick = i;
                        break;
                    }
                    u -= wi;
                }
                pick
            }
        };
        out.push(next);
        if next == eos_id || out.len() == max_new_tokens {
            break;
        }
        logits = cache.step(params, next)?;
    }
    Ok(out)
}
