use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};
use crate::rng;
use crate::tensor::TensorTable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub head_dim: usize,
    pub max_seq_len: usize,
    pub ffn_multiplier: usize,
    pub ln_eps: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            vocab_size: 512,
            num_layers: 2,
            num_heads: 4,
            head_dim: 32,
            max_seq_len: 256,
            ffn_multiplier: 4,
            ln_eps: 1e-5,
        }
    }
}

impl ModelConfig {
    pub fn model_dim(&self) -> usize {
        self.num_heads * self.head_dim
    }

    pub fn ffn_dim(&self) -> usize {
        self.ffn_multiplier * self.model_dim()
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size <= 5 {
            return arg(format!("vocab_size {} leaves no room beyond the specials", self.vocab_size));
        }
        if self.max_seq_len < 2 {
            return arg("max_seq_len must be at least 2");
        }
        if self.num_layers == 0 || self.num_heads == 0 || self.head_dim == 0 || self.ffn_multiplier == 0 {
            return arg("model sizes must be positive");
        }
        if !(self.ln_eps > 0.0) {
            return arg("ln_eps must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoraConfig {
    pub rank: usize,
    pub alpha: f64,
    pub dropout: f64,
}

impl Default for LoraConfig {
    fn default() -> Self {
        LoraConfig { rank: 8, alpha: 16.0, dropout: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoraAdapter {
    /// r × d_in
    pub a: Array2<f64>,
    /// d_out × r
    pub b: Array2<f64>,
    pub alpha: f64,
    pub dropout: f64,
}

impl LoraAdapter {
    pub fn rank(&self) -> usize {
        self.a.nrows()
    }

    pub fn scale(&self) -> f64 {
        self.alpha / self.rank() as f64
    }
}

/// `y = x·W + b`, optionally plus a low-rank update `s·(x·Aᵀ)·Bᵀ`.
/// The base weight is stored d_in × d_out and is never trained.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Array2<f64>,
    pub bias: Option<Array1<f64>>,
    pub lora: Option<LoraAdapter>,
}

/// Inputs saved by [`Linear::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct LinearCache {
    pub x: Array2<f64>,
    /// Dropout-scaled input of the adapter path, when dropout was applied.
    pub mask: Option<Array2<f64>>,
    /// Adapter activations x_m·Aᵀ.
    pub xa: Option<Array2<f64>>,
}

impl Linear {
    pub fn d_in(&self) -> usize {
        self.weight.nrows()
    }

    pub fn d_out(&self) -> usize {
        self.weight.ncols()
    }

    /// `mask`, when given, multiplies the adapter input elementwise
    /// (already divided by the keep probability).
    pub fn forward(&self, x: &Array2<f64>, mask: Option<Array2<f64>>) -> (Array2<f64>, LinearCache) {
        let mut y = x.dot(&self.weight);
        if let Some(b) = &self.bias {
            y += b;
        }
        let mut xa = None;
        if let Some(l) = &self.lora {
            let a = match &mask {
                Some(m) => (x * m).dot(&l.a.t()),
                None => x.dot(&l.a.t()),
            };
            y.scaled_add(l.scale(), &a.dot(&l.b.t()));
            xa = Some(a);
        }
        (y, LinearCache { x: x.clone(), mask, xa })
    }

    pub fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        self.forward(x, None).0
    }

    /// Returns dL/dx and accumulates adapter gradients into `grad`.
    pub fn backward(&self, dy: &Array2<f64>, cache: &LinearCache, grad: Option<&mut (Array2<f64>, Array2<f64>)>) -> Array2<f64> {
        let mut dx = dy.dot(&self.weight.t());
        if let (Some(l), Some(xa)) = (&self.lora, &cache.xa) {
            let s = l.scale();
            let dyb = dy.dot(&l.b);
            let mut dxm = dyb.dot(&l.a);
            dxm *= s;
            if let Some(g) = grad {
                let xm = match &cache.mask {
                    Some(m) => &cache.x * m,
                    None => cache.x.clone(),
                };
                g.0.scaled_add(s, &dyb.t().dot(&xm));
                g.1.scaled_add(s, &dy.t().dot(xa));
            }
            match &cache.mask {
                Some(m) => dx += &(dxm * m),
                None => dx += &dxm,
            }
        }
        dx
    }

    /// Base weight with the adapter folded in; the adapter is dropped.
    pub fn merged(&self) -> Linear {
        let mut w = self.weight.clone();
        if let Some(l) = &self.lora {
            w.scaled_add(l.scale(), &l.a.t().dot(&l.b.t()));
        }
        Linear { weight: w, bias: self.bias.clone(), lora: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
}

impl LayerNorm {
    fn identity(d: usize) -> Self {
        LayerNorm { gamma: Array1::ones(d), beta: Array1::zeros(d) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub ln1: LayerNorm,
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub ln2: LayerNorm,
    pub fc1: Linear,
    pub fc2: Linear,
}

/// Linear slots of a layer, in canonical order.
pub const SLOTS: [&str; 6] = ["q", "k", "v", "o", "fc1", "fc2"];

impl Layer {
    pub fn linears(&self) -> [&Linear; 6] {
        [&self.q, &self.k, &self.v, &self.o, &self.fc1, &self.fc2]
    }

    pub fn linears_mut(&mut self) -> [&mut Linear; 6] {
        [&mut self.q, &mut self.k, &mut self.v, &mut self.o, &mut self.fc1, &mut self.fc2]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub tok_emb: Array2<f64>,
    pub pos_emb: Array2<f64>,
    pub layers: Vec<Layer>,
    pub ln_f: LayerNorm,
    pub head: Linear,
}

fn normal<G: Rng>(rows: usize, cols: usize, std: f64, rng: &mut G) -> Array2<f64> {
    let d = Normal::new(0.0, std).unwrap();
    Array2::from_shape_fn((rows, cols), |_| d.sample(rng))
}

/// Dense D×D matrix with independent D_h×D_h blocks on the diagonal.
fn block_diagonal<G: Rng>(heads: usize, dh: usize, rng: &mut G) -> Array2<f64> {
    let d = heads * dh;
    let mut w = Array2::zeros((d, d));
    for j in 0..heads {
        let blk = normal(dh, dh, (1.0 / dh as f64).sqrt(), rng);
        w.slice_mut(ndarray::s![j * dh..(j + 1) * dh, j * dh..(j + 1) * dh]).assign(&blk);
    }
    w
}

fn plain(weight: Array2<f64>, bias: bool) -> Linear {
    let d_out = weight.ncols();
    Linear { weight, bias: bias.then(|| Array1::zeros(d_out)), lora: None }
}

impl ModelParams {
    /// Random backbone. Embeddings are unit normal, projections scaled by
    /// fan-in, norms are identity and biases zero.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = rng::stream(seed, &[0x30DE]);
        let (d, f, h, dh) = (config.model_dim(), config.ffn_dim(), config.num_heads, config.head_dim);
        let tok_emb = normal(config.vocab_size, d, 1.0, &mut rng);
        let pos_emb = normal(config.max_seq_len, d, 0.5, &mut rng);
        let layers = (0..config.num_layers)
            .map(|_| Layer {
                ln1: LayerNorm::identity(d),
                q: plain(block_diagonal(h, dh, &mut rng), false),
                k: plain(block_diagonal(h, dh, &mut rng), false),
                v: plain(block_diagonal(h, dh, &mut rng), false),
                o: plain(normal(d, d, (1.0 / d as f64).sqrt(), &mut rng), false),
                ln2: LayerNorm::identity(d),
                fc1: plain(normal(d, f, (1.0 / d as f64).sqrt(), &mut rng), true),
                fc2: plain(normal(f, d, (1.0 / f as f64).sqrt(), &mut rng), true),
            })
            .collect();
        let head = plain(normal(d, config.vocab_size, (1.0 / d as f64).sqrt(), &mut rng), false);
        Ok(ModelParams { config: config.clone(), tok_emb, pos_emb, layers, ln_f: LayerNorm::identity(d), head })
    }

    /// All linear maps in canonical order: each layer's q, k, v, o, fc1,
    /// fc2, then the output head.
    pub fn linears(&self) -> Vec<&Linear> {
        let mut v: Vec<&Linear> = self.layers.iter().flat_map(|l| l.linears()).collect();
        v.push(&self.head);
        v
    }

    pub fn linears_mut(&mut self) -> Vec<&mut Linear> {
        let mut v: Vec<&mut Linear> = self.layers.iter_mut().flat_map(|l| l.linears_mut()).collect();
        v.push(&mut self.head);
        v
    }

    pub fn linear_names(&self) -> Vec<String> {
        let mut v: Vec<String> =
            (0..self.layers.len()).flat_map(|i| SLOTS.iter().map(move |s| format!("layer{i}.{s}"))).collect();
        v.push("head".into());
        v
    }

    /// Adds a zero-output adapter to every linear map (embeddings excluded).
    pub fn apply_lora(&mut self, config: &LoraConfig, seed: u64) -> Result<()> {
        if config.rank == 0 || !(config.alpha > 0.0) || !(0.0..1.0).contains(&config.dropout) {
            return arg("LoRA needs rank > 0, alpha > 0 and dropout in [0, 1)");
        }
        for (i, lin) in self.linears_mut().into_iter().enumerate() {
            let (d_in, d_out) = (lin.d_in(), lin.d_out());
            if config.rank > d_in.min(d_out) {
                return arg(format!("LoRA rank {} exceeds min({d_in}, {d_out})", config.rank));
            }
            let bound = 1.0 / (d_in as f64).sqrt();
            let mut r = rng::stream(seed, &[0x10AA, i as u64]);
            let a = Array2::from_shape_fn((config.rank, d_in), |_| r.random_range(-bound..bound));
            lin.lora = Some(LoraAdapter { a, b: Array2::zeros((d_out, config.rank)), alpha: config.alpha, dropout: config.dropout });
        }
        Ok(())
    }

    /// Folds every adapter into its base weight.
    pub fn merged(&self) -> ModelParams {
        let mut m = self.clone();
        for lin in m.linears_mut() {
            *lin = lin.merged();
        }
        m
    }

    pub fn has_lora(&self) -> bool {
        self.head.lora.is_some()
    }

    /// Adapter factors in canonical order (A then B for each linear).
    pub fn trainable(&self) -> Vec<(String, &[f64])> {
        let names = self.linear_names();
        let mut v = Vec::new();
        for (name, lin) in names.iter().zip(self.linears()) {
            if let Some(l) = &lin.lora {
                v.push((format!("{name}.lora_a"), l.a.as_slice().unwrap()));
                v.push((format!("{name}.lora_b"), l.b.as_slice().unwrap()));
            }
        }
        v
    }

    pub fn trainable_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let names = self.linear_names();
        let mut v = Vec::new();
        for (name, lin) in names.iter().zip(self.linears_mut()) {
            if let Some(l) = &mut lin.lora {
                let LoraAdapter { a, b, .. } = l;
                v.push((format!("{name}.lora_a"), a.as_slice_mut().unwrap()));
                v.push((format!("{name}.lora_b"), b.as_slice_mut().unwrap()));
            }
        }
        v
    }

    pub fn count_trainable(&self) -> usize {
        self.trainable().iter().map(|(_, s)| s.len()).sum()
    }

    /// Every weight that is not an adapter factor.
    pub fn frozen(&self) -> Vec<(String, Vec<f64>)> {
        let mut t = TensorTable::new();
        self.export(&mut t);
        t.iter().filter(|(n, _, _)| !n.contains(".lora_")).map(|(n, _, v)| (n.to_owned(), v.to_vec())).collect()
    }

    pub fn export(&self, table: &mut TensorTable) {
        table.put("model.tok_emb", &self.tok_emb);
        table.put("model.pos_emb", &self.pos_emb);
        for (name, lin) in self.linear_names().iter().zip(self.linears()) {
            table.put(format!("model.{name}.weight"), &lin.weight);
            if let Some(b) = &lin.bias {
                table.put(format!("model.{name}.bias"), b);
            }
            if let Some(l) = &lin.lora {
                table.put(format!("model.{name}.lora_a"), &l.a);
                table.put(format!("model.{name}.lora_b"), &l.b);
            }
        }
        for (i, l) in self.layers.iter().enumerate() {
            for (n, ln) in [("ln1", &l.ln1), ("ln2", &l.ln2)] {
                table.put(format!("model.layer{i}.{n}.gamma"), &ln.gamma);
                table.put(format!("model.layer{i}.{n}.beta"), &ln.beta);
            }
        }
        table.put("model.ln_f.gamma", &self.ln_f.gamma);
        table.put("model.ln_f.beta", &self.ln_f.beta);
    }

    /// Rebuilds parameters from a table written by [`ModelParams::export`].
    pub fn import(config: &ModelConfig, lora: Option<&LoraConfig>, table: &TensorTable) -> Result<Self> {
        let mut p = ModelParams::init(config, 0)?;
        if let Some(l) = lora {
            p.apply_lora(l, 0)?;
        }
        p.tok_emb = table.get2("model.tok_emb", p.tok_emb.dim())?;
        p.pos_emb = table.get2("model.pos_emb", p.pos_emb.dim())?;
        let names = p.linear_names();
        for (name, lin) in names.iter().zip(p.linears_mut()) {
            lin.weight = table.get2(&format!("model.{name}.weight"), lin.weight.dim())?;
            if let Some(b) = &mut lin.bias {
                *b = table.get1(&format!("model.{name}.bias"), b.len())?;
            }
            if let Some(l) = &mut lin.lora {
                l.a = table.get2(&format!("model.{name}.lora_a"), l.a.dim())?;
                l.b = table.get2(&format!("model.{name}.lora_b"), l.b.dim())?;
            } else if table.contains(&format!("model.{name}.lora_a")) {
                return Err(Error::Incompatible(format!("checkpoint has an adapter on {name} but config has none")));
            }
        }
        let d = config.model_dim();
        for (i, l) in p.layers.iter_mut().enumerate() {
            for (n, ln) in [("ln1", &mut l.ln1), ("ln2", &mut l.ln2)] {
                ln.gamma = table.get1(&format!("model.layer{i}.{n}.gamma"), d)?;
                ln.beta = table.get1(&format!("model.layer{i}.{n}.beta"), d)?;
            }
        }
        p.ln_f.gamma = table.get1("model.ln_f.gamma", d)?;
        p.ln_f.beta = table.get1("model.ln_f.beta", d)?;
        Ok(p)
    }

    /// Tiles an L_e × D_h embedding across heads into L_e × D_m.
    pub fn tile_prefix(&self, h_e: &Array2<f64>) -> Result<Array2<f64>> {
        let (k, dh) = (self.config.num_heads, self.config.head_dim);
        if h_e.ncols() != dh {
            return Err(Error::Shape(format!("ECG embedding width {} != head_dim {dh}", h_e.ncols())));
        }
        let views: Vec<_> = (0..k).map(|_| h_e.view()).collect();
        Ok(ndarray::concatenate(Axis(1), &views).unwrap())
    }
}
