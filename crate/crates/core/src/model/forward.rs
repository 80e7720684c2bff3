use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::attention::{attention_backward, attention_forward, AttentionCache, PrefixVisibility};
use super::ops::{gelu, gelu_grad, layer_norm, layer_norm_backward};
use super::params::{LinearCache, ModelParams, SLOTS};
use crate::error::{Error, Result};
use crate::rng;

/// Inverted-dropout masks for adapter inputs.
pub(crate) struct Dropout {
    p: f64,
    rng: ChaCha8Rng,
}

impl Dropout {
    pub(crate) fn mask(&mut self, rows: usize, cols: usize) -> Option<Array2<f64>> {
        if self.p <= 0.0 {
            return None;
        }
        let keep = 1.0 / (1.0 - self.p);
        Some(Array2::from_shape_fn((rows, cols), |_| if self.rng.random::<f64>() < self.p { 0.0 } else { keep }))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ForwardOptions {
    pub prefix: PrefixVisibility,
    /// Seed for adapter dropout; `None` disables dropout.
    pub dropout_seed: Option<u64>,
}

#[derive(Debug, Clone)]
struct LayerCache {
    ln1: (Array2<f64>, ndarray::Array1<f64>),
    attn: AttentionCache,
    ln2: (Array2<f64>, ndarray::Array1<f64>),
    fc1: LinearCache,
    pre: Array2<f64>,
    fc2: LinearCache,
}

/// Activations saved by [`ModelParams::forward_train`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    layers: Vec<LayerCache>,
    ln_f: (Array2<f64>, ndarray::Array1<f64>),
    head: LinearCache,
    prefix_rows: usize,
}

impl ForwardCache {
    /// Attention weights of layer `i`, one L × (L_e + L) matrix per head.
    pub fn attention_probs(&self, i: usize) -> &[Array2<f64>] {
        &self.layers[i].attn.probs
    }
}

/// Adapter gradients in the canonical linear order of
/// [`ModelParams::linears`]; `None` where a linear has no adapter.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub lora: Vec<Option<(Array2<f64>, Array2<f64>)>>,
}

impl ModelGrads {
    pub fn zeros(params: &ModelParams) -> Self {
        ModelGrads {
            lora: params
                .linears()
                .iter()
                .map(|l| l.lora.as_ref().map(|a| (Array2::zeros(a.a.raw_dim()), Array2::zeros(a.b.raw_dim()))))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &ModelGrads) {
        for (a, b) in self.lora.iter_mut().zip(&other.lora) {
            if let (Some(a), Some(b)) = (a, b) {
                a.0 += &b.0;
                a.1 += &b.1;
            }
        }
    }

    /// Flat views in the order of [`ModelParams::trainable`].
    pub fn slices(&self) -> Vec<&[f64]> {
        self.lora.iter().flatten().flat_map(|(a, b)| [a.as_slice().unwrap(), b.as_slice().unwrap()]).collect()
    }
}

impl ModelParams {
    fn check_inputs(&self, tokens: &[u32], h_e: &Array2<f64>) -> Result<()> {
        let c = &self.config;
        if tokens.is_empty() {
            return Err(Error::Shape("empty token sequence".into()));
        }
        if tokens.len() > c.max_seq_len {
            return Err(Error::ContextOverflow { len: tokens.len(), max: c.max_seq_len });
        }
        if let Some(&id) = tokens.iter().find(|&&t| t as usize >= c.vocab_size) {
            return Err(Error::TokenRange { id, vocab: c.vocab_size });
        }
        if h_e.ncols() != c.head_dim || h_e.nrows() == 0 {
            return Err(Error::Shape(format!("ECG embedding {:?} must be L_e × {}", h_e.dim(), c.head_dim)));
        }
        if h_e.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("ECG embedding is not finite".into()));
        }
        Ok(())
    }

    pub(crate) fn embed(&self, tokens: &[u32]) -> Array2<f64> {
        let mut x = Array2::<f64>::zeros((tokens.len(), self.config.model_dim()));
        for (p, &t) in tokens.iter().enumerate() {
            let mut row = x.row_mut(p);
            row.assign(&self.tok_emb.row(t as usize));
            row += &self.pos_emb.row(p);
        }
        x
    }

    /// Next-token logits (L × V) for every text position.
    pub fn forward(&self, tokens: &[u32], h_e: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward_train(tokens, h_e, ForwardOptions::default())?.0)
    }

    pub fn forward_with(&self, tokens: &[u32], h_e: &Array2<f64>, opts: ForwardOptions) -> Result<Array2<f64>> {
        Ok(self.forward_train(tokens, h_e, opts)?.0)
    }

    pub fn forward_train(&self, tokens: &[u32], h_e: &Array2<f64>, opts: ForwardOptions) -> Result<(Array2<f64>, ForwardCache)> {
        self.check_inputs(tokens, h_e)?;
        let c = &self.config;
        let e = self.tile_prefix(h_e)?;
        let p = self.head.lora.as_ref().map_or(0.0, |l| l.dropout);
        let mut dropout = opts.dropout_seed.map(|s| Dropout { p, rng: rng::stream(s, &[0xD0]) });
        let mut x = self.embed(tokens);
        let mut layers = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (a, xh1, inv1) = layer_norm(&x, &layer.ln1.gamma, &layer.ln1.beta, c.ln_eps);
            let (att, attn) = attention_forward(layer, &a, &e, c.num_heads, opts.prefix, dropout.as_mut());
            x += &att;
            let (b, xh2, inv2) = layer_norm(&x, &layer.ln2.gamma, &layer.ln2.beta, c.ln_eps);
            let m1 = dropout.as_mut().and_then(|d| d.mask(b.nrows(), b.ncols()));
            let (pre, fc1) = layer.fc1.forward(&b, m1);
            let act = pre.mapv(gelu);
            let m2 = dropout.as_mut().and_then(|d| d.mask(act.nrows(), act.ncols()));
            let (mlp, fc2) = layer.fc2.forward(&act, m2);
            x += &mlp;
            layers.push(LayerCache { ln1: (xh1, inv1), attn, ln2: (xh2, inv2), fc1, pre, fc2 });
        }
        let (hf, xhf, invf) = layer_norm(&x, &self.ln_f.gamma, &self.ln_f.beta, c.ln_eps);
        let mh = dropout.as_mut().and_then(|d| d.mask(hf.nrows(), hf.ncols()));
        let (logits, head) = self.head.forward(&hf, mh);
        Ok((logits, ForwardCache { layers, ln_f: (xhf, invf), head, prefix_rows: h_e.nrows() }))
    }

    /// Backpropagates `dlogits`. Returns adapter gradients and the gradient
    /// with respect to the ECG embedding, summed over every layer's prefix.
    pub fn backward(&self, cache: &ForwardCache, dlogits: &Array2<f64>) -> (ModelGrads, Array2<f64>) {
        let c = &self.config;
        let mut grads = ModelGrads::zeros(self);
        let n_slots = SLOTS.len();
        let (layer_grads, head_grad) = grads.lora.split_at_mut(self.layers.len() * n_slots);
        let dhf = self.head.backward(dlogits, &cache.head, head_grad[0].as_mut());
        let mut dx = layer_norm_backward(&dhf, &cache.ln_f.0, &cache.ln_f.1, &self.ln_f.gamma);
        let mut de = Array2::<f64>::zeros((cache.prefix_rows, c.model_dim()));
        for (i, (layer, lc)) in self.layers.iter().zip(&cache.layers).enumerate().rev() {
            let [gq, gk, gv, go, g1, g2] = &mut layer_grads[i * n_slots..(i + 1) * n_slots] else {
                unreachable!()
            };
            let dact = layer.fc2.backward(&dx, &lc.fc2, g2.as_mut());
            let dpre = dact * lc.pre.mapv(gelu_grad);
            let db = layer.fc1.backward(&dpre, &lc.fc1, g1.as_mut());
            dx += &layer_norm_backward(&db, &lc.ln2.0, &lc.ln2.1, &layer.ln2.gamma);
            let (da, dei) =
                attention_backward(layer, &dx, &lc.attn, c.num_heads, [gq.as_mut(), gk.as_mut(), gv.as_mut(), go.as_mut()]);
            de += &dei;
            dx += &layer_norm_backward(&da, &lc.ln1.0, &lc.ln1.1, &layer.ln1.gamma);
        }
        let dh = c.head_dim;
        let mut dh_e = Array2::<f64>::zeros((cache.prefix_rows, dh));
        for j in 0..c.num_heads {
            dh_e += &de.slice(ndarray::s![.., j * dh..(j + 1) * dh]);
        }
        (grads, dh_e)
    }
}
