//! Temporal-convolution ECG encoder and its widen-then-narrow projection.
//!
//! Activations use a time-major layout (T rows × C channels) so that the
//! im2col matrix of a valid convolution is a set of contiguous windows.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};
use crate::rng;
use crate::signal::{EcgRecord, NUM_LEADS};
use crate::tensor::TensorTable;

/// The encoder output H_e, `prefix_len` rows of `head_dim` activations.
pub type EcgEmbedding = Array2<f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    /// Output channels of each convolution block; its length is the block count.
    pub channels: Vec<usize>,
    pub kernel_size: usize,
    pub pool_size: usize,
    pub prefix_len: usize,
    pub head_dim: usize,
    pub bn_eps: f64,
    pub bn_momentum: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            channels: vec![32, 64, 128],
            kernel_size: 7,
            pool_size: 4,
            prefix_len: 1,
            head_dim: 128,
            bn_eps: 1e-5,
            bn_momentum: 0.1,
        }
    }
}

impl EncoderConfig {
    pub fn num_blocks(&self) -> usize {
        self.channels.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel_size == 0 || self.pool_size == 0 || self.prefix_len == 0 || self.head_dim == 0 {
            return arg("encoder sizes must be positive");
        }
        if self.channels.contains(&0) {
            return arg("encoder channel counts must be positive");
        }
        if !(self.bn_eps > 0.0) || !(0.0..=1.0).contains(&self.bn_momentum) {
            return arg("batch-norm eps must be positive and momentum in [0, 1]");
        }
        Ok(())
    }

    fn final_channels(&self) -> usize {
        self.channels.last().copied().unwrap_or(NUM_LEADS)
    }

    pub fn hidden_dim(&self) -> usize {
        2 * self.final_channels()
    }

    pub fn output_dim(&self) -> usize {
        self.prefix_len * self.head_dim
    }

    /// Shortest input that leaves at least one time step after the last block.
    pub fn min_length(&self) -> usize {
        self.channels.iter().fold(1, |need, _| need * self.pool_size + self.kernel_size - 1)
    }

    /// Trainable parameters: conv weights and biases, batch-norm scale and
    /// shift, and both projection layers. Running statistics are excluded.
    pub fn count_parameters(&self) -> usize {
        let mut c_in = NUM_LEADS;
        let mut n = 0;
        for &c in &self.channels {
            n += c_in * c * self.kernel_size + c + 2 * c;
            c_in = c;
        }
        let (h, o) = (self.hidden_dim(), self.output_dim());
        n + c_in * h + h + h * o + o
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvBlock {
    /// (kernel·C_in) × C_out, rows ordered kernel tap major.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub config: EncoderConfig,
    pub blocks: Vec<ConvBlock>,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    /// Normalize with statistics of the current batch.
    Train,
    /// Normalize with the running statistics.
    Inference,
}

fn normal_matrix<G: Rng>(rows: usize, cols: usize, std: f64, rng: &mut G) -> Array2<f64> {
    let d = Normal::new(0.0, std).unwrap();
    Array2::from_shape_fn((rows, cols), |_| d.sample(rng))
}

/// Per-lead z-score, returned time-major (T × 12). A flat lead is only
/// centred.
pub fn normalize_record(record: &EcgRecord) -> Array2<f64> {
    let x = record.to_f64();
    let mut out = Array2::<f64>::zeros((x.ncols(), x.nrows()));
    for (l, lead) in x.rows().into_iter().enumerate() {
        let mean = lead.mean().unwrap_or(0.0);
        let std = lead.mapv(|v| (v - mean).powi(2)).mean().unwrap_or(0.0).sqrt();
        let scale = if std < 1e-8 { 1.0 } else { 1.0 / std };
        for (t, &v) in lead.iter().enumerate() {
            out[[t, l]] = (v - mean) * scale;
        }
    }
    out
}

fn im2col(x: &Array2<f64>, k: usize) -> Array2<f64> {
    let (t, c) = x.dim();
    let rows = t + 1 - k;
    let src = x.as_slice().expect("standard layout");
    let mut col = Array2::<f64>::zeros((rows, k * c));
    for (r, mut row) in col.rows_mut().into_iter().enumerate() {
        row.as_slice_mut().unwrap().copy_from_slice(&src[r * c..(r + k) * c]);
    }
    col
}

fn col2im(dcol: &Array2<f64>, k: usize, c: usize) -> Array2<f64> {
    let rows = dcol.nrows();
    let mut dx = Array2::<f64>::zeros((rows + k - 1, c));
    let dst = dx.as_slice_mut().unwrap();
    for (r, row) in dcol.rows().into_iter().enumerate() {
        for (d, s) in dst[r * c..(r + k) * c].iter_mut().zip(row.iter()) {
            *d += s;
        }
    }
    dx
}

fn avg_pool(x: &Array2<f64>, p: usize) -> Array2<f64> {
    let (t, c) = x.dim();
    let n = t / p;
    let mut out = Array2::<f64>::zeros((n, c));
    for i in 0..n {
        let mut row = out.row_mut(i);
        for k in 0..p {
            row += &x.row(i * p + k);
        }
        row /= p as f64;
    }
    out
}

fn avg_pool_backward(d: &Array2<f64>, p: usize, t: usize) -> Array2<f64> {
    let mut dx = Array2::<f64>::zeros((t, d.ncols()));
    for i in 0..d.nrows() {
        let g = &d.row(i) / p as f64;
        for k in 0..p {
            dx.row_mut(i * p + k).assign(&g);
        }
    }
    dx
}

struct BlockTape {
    cols: Vec<Array2<f64>>,
    xhat: Vec<Array2<f64>>,
    active: Vec<Array2<bool>>,
    in_len: Vec<usize>,
    mean: Array1<f64>,
    var: Array1<f64>,
}

/// Everything the backward pass needs from a batch forward pass.
pub struct EncoderTape {
    mode: BnMode,
    blocks: Vec<BlockTape>,
    pooled: Vec<Array1<f64>>,
    a1: Vec<Array1<f64>>,
    h: Vec<Array1<f64>>,
}

impl EncoderTape {
    /// Batch statistics (mean, biased variance) of each block.
    pub fn batch_stats(&self) -> Vec<(Array1<f64>, Array1<f64>)> {
        self.blocks.iter().map(|b| (b.mean.clone(), b.var.clone())).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockGrads {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderGrads {
    pub blocks: Vec<BlockGrads>,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

macro_rules! flat {
    ($a:expr) => {
        $a.as_slice().expect("standard layout")
    };
}
macro_rules! flat_mut {
    ($a:expr) => {
        $a.as_slice_mut().expect("standard layout")
    };
}

impl EncoderGrads {
    pub fn slices(&self) -> Vec<(String, &[f64])> {
        let mut v = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            v.push((format!("encoder.block{i}.weight"), flat!(b.weight)));
            v.push((format!("encoder.block{i}.bias"), flat!(b.bias)));
            v.push((format!("encoder.block{i}.gamma"), flat!(b.gamma)));
            v.push((format!("encoder.block{i}.beta"), flat!(b.beta)));
        }
        v.push(("encoder.w1".into(), flat!(self.w1)));
        v.push(("encoder.b1".into(), flat!(self.b1)));
        v.push(("encoder.w2".into(), flat!(self.w2)));
        v.push(("encoder.b2".into(), flat!(self.b2)));
        v
    }
}

impl EncoderParams {
    /// He-normal convolutions and projections, zero biases, identity batch norm.
    pub fn init(config: &EncoderConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = rng::stream(seed, &[0xE1C0]);
        let k = config.kernel_size;
        let mut c_in = NUM_LEADS;
        let mut blocks = Vec::new();
        for &c in &config.channels {
            let fan_in = (k * c_in) as f64;
            blocks.push(ConvBlock {
                weight: normal_matrix(k * c_in, c, (2.0 / fan_in).sqrt(), &mut rng),
                bias: Array1::zeros(c),
                gamma: Array1::ones(c),
                beta: Array1::zeros(c),
                running_mean: Array1::zeros(c),
                running_var: Array1::ones(c),
            });
            c_in = c;
        }
        let (h, o) = (config.hidden_dim(), config.output_dim());
        Ok(EncoderParams {
            config: config.clone(),
            blocks,
            w1: normal_matrix(c_in, h, (2.0 / c_in as f64).sqrt(), &mut rng),
            b1: Array1::zeros(h),
            w2: normal_matrix(h, o, (1.0 / h as f64).sqrt(), &mut rng),
            b2: Array1::zeros(o),
        })
    }

    pub fn count_trainable(&self) -> usize {
        self.trainable().iter().map(|(_, s)| s.len()).sum()
    }

    pub fn trainable(&self) -> Vec<(String, &[f64])> {
        let mut v = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            v.push((format!("encoder.block{i}.weight"), flat!(b.weight)));
            v.push((format!("encoder.block{i}.bias"), flat!(b.bias)));
            v.push((format!("encoder.block{i}.gamma"), flat!(b.gamma)));
            v.push((format!("encoder.block{i}.beta"), flat!(b.beta)));
        }
        v.push(("encoder.w1".into(), flat!(self.w1)));
        v.push(("encoder.b1".into(), flat!(self.b1)));
        v.push(("encoder.w2".into(), flat!(self.w2)));
        v.push(("encoder.b2".into(), flat!(self.b2)));
        v
    }

    pub fn trainable_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut v = Vec::new();
        for (i, b) in self.blocks.iter_mut().enumerate() {
            let ConvBlock { weight, bias, gamma, beta, .. } = b;
            v.push((format!("encoder.block{i}.weight"), flat_mut!(weight)));
            v.push((format!("encoder.block{i}.bias"), flat_mut!(bias)));
            v.push((format!("encoder.block{i}.gamma"), flat_mut!(gamma)));
            v.push((format!("encoder.block{i}.beta"), flat_mut!(beta)));
        }
        v.push(("encoder.w1".into(), flat_mut!(self.w1)));
        v.push(("encoder.b1".into(), flat_mut!(self.b1)));
        v.push(("encoder.w2".into(), flat_mut!(self.w2)));
        v.push(("encoder.b2".into(), flat_mut!(self.b2)));
        v
    }

    pub fn zero_grads(&self) -> EncoderGrads {
        EncoderGrads {
            blocks: self
                .blocks
                .iter()
                .map(|b| BlockGrads {
                    weight: Array2::zeros(b.weight.raw_dim()),
                    bias: Array1::zeros(b.bias.len()),
                    gamma: Array1::zeros(b.gamma.len()),
                    beta: Array1::zeros(b.beta.len()),
                })
                .collect(),
            w1: Array2::zeros(self.w1.raw_dim()),
            b1: Array1::zeros(self.b1.len()),
            w2: Array2::zeros(self.w2.raw_dim()),
            b2: Array1::zeros(self.b2.len()),
        }
    }

    fn check_input(&self, x: &Array2<f64>) -> Result<()> {
        if x.ncols() != NUM_LEADS {
            return Err(Error::Shape(format!("encoder input has {} channels, expected 12", x.ncols())));
        }
        let need = self.config.min_length();
        if x.nrows() < need {
            return Err(Error::Shape(format!("{} samples is below the receptive field of {need}", x.nrows())));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("encoder input is not finite".into()));
        }
        Ok(())
    }

    /// Inference-mode encoding of a record.
    pub fn encode(&self, record: &EcgRecord) -> Result<EcgEmbedding> {
        self.encode_normalized(&normalize_record(record))
    }

    /// Inference-mode encoding of an already normalized T × 12 input.
    pub fn encode_normalized(&self, x: &Array2<f64>) -> Result<EcgEmbedding> {
        let (mut out, _) = self.forward_batch(std::slice::from_ref(x), BnMode::Inference)?;
        Ok(out.pop().unwrap())
    }

    /// Pooled features entering the projection, in inference mode.
    pub fn features(&self, x: &Array2<f64>) -> Result<Array1<f64>> {
        let (_, tape) = self.forward_batch(std::slice::from_ref(x), BnMode::Inference)?;
        Ok(tape.pooled.into_iter().next().unwrap())
    }

    pub fn forward_batch(&self, xs: &[Array2<f64>], mode: BnMode) -> Result<(Vec<EcgEmbedding>, EncoderTape)> {
        if xs.is_empty() {
            return arg("empty encoder batch");
        }
        for x in xs {
            self.check_input(x)?;
        }
        let cfg = &self.config;
        let (k, p, eps) = (cfg.kernel_size, cfg.pool_size, cfg.bn_eps);
        let mut acts: Vec<Array2<f64>> = xs.to_vec();
        let mut tapes = Vec::new();
        for block in &self.blocks {
            let c = block.bias.len();
            let (cols, us): (Vec<_>, Vec<_>) = acts
                .par_iter()
                .map(|x| {
                    let col = im2col(x, k);
                    let u = col.dot(&block.weight) + &block.bias;
                    (col, u)
                })
                .unzip();
            let (mean, var) = match mode {
                BnMode::Inference => (block.running_mean.clone(), block.running_var.clone()),
                BnMode::Train => {
                    let n: usize = us.iter().map(|u| u.nrows()).sum();
                    let mut sum = Array1::<f64>::zeros(c);
                    for u in &us {
                        sum += &u.sum_axis(Axis(0));
                    }
                    let mean = sum / n as f64;
                    let mut sq = Array1::<f64>::zeros(c);
                    for u in &us {
                        sq += &(u - &mean).mapv(|v| v * v).sum_axis(Axis(0));
                    }
                    (mean, sq / n as f64)
                }
            };
            let inv_std = var.mapv(|v| 1.0 / (v + eps).sqrt());
            let results: Vec<_> = us
                .into_par_iter()
                .map(|u| {
                    let xhat = (u - &mean) * &inv_std;
                    let z = &xhat * &block.gamma + &block.beta;
                    let active = z.mapv(|v| v > 0.0);
                    let r = z.mapv(|v| v.max(0.0));
                    let len = r.nrows();
                    (xhat, active, avg_pool(&r, p), len)
                })
                .collect();
            let mut bt = BlockTape { cols, xhat: vec![], active: vec![], in_len: vec![], mean, var };
            acts = Vec::with_capacity(results.len());
            for (xhat, active, pooled, len) in results {
                bt.xhat.push(xhat);
                bt.active.push(active);
                bt.in_len.push(len);
                acts.push(pooled);
            }
            tapes.push(bt);
        }
        let (le, dh) = (cfg.prefix_len, cfg.head_dim);
        let mut tape = EncoderTape { mode, blocks: tapes, pooled: vec![], a1: vec![], h: vec![] };
        let mut outs = Vec::with_capacity(acts.len());
        for a in acts {
            let g = a.mean_axis(Axis(0)).unwrap();
            let a1 = g.dot(&self.w1) + &self.b1;
            let h = a1.mapv(|v| v.max(0.0));
            let o = h.dot(&self.w2) + &self.b2;
            outs.push(o.into_shape_with_order((le, dh)).unwrap());
            tape.pooled.push(g);
            tape.a1.push(a1);
            tape.h.push(h);
        }
        Ok((outs, tape))
    }

    /// Gradients of Σ_i ⟨d_out_i, H_e,i⟩ with respect to the trainable
    /// parameters.
    pub fn backward_batch(&self, tape: &EncoderTape, d_out: &[EcgEmbedding]) -> EncoderGrads {
        let mut g = self.zero_grads();
        let mut d_acts: Vec<Array2<f64>> = Vec::with_capacity(d_out.len());
        let last_len: Vec<usize> = match tape.blocks.last() {
            Some(b) => b.in_len.iter().map(|&l| l / self.config.pool_size).collect(),
            None => vec![0; d_out.len()],
        };
        for (i, d) in d_out.iter().enumerate() {
            let d = d.view().into_shape_with_order(self.config.output_dim()).unwrap();
            g.b2 += &d;
            g.w2 += &outer(tape.h[i].view(), d.view());
            let dh = self.w2.dot(&d);
            let da1 = dh * tape.a1[i].mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
            g.b1 += &da1;
            g.w1 += &outer(tape.pooled[i].view(), da1.view());
            let dg = self.w1.dot(&da1);
            let t = last_len[i];
            let mut da = Array2::<f64>::zeros((t, dg.len()));
            if t > 0 {
                da.rows_mut().into_iter().for_each(|mut r| r.assign(&(&dg / t as f64)));
            }
            d_acts.push(da);
        }
        let (k, p, eps) = (self.config.kernel_size, self.config.pool_size, self.config.bn_eps);
        for (b, (block, bt)) in self.blocks.iter().zip(&tape.blocks).enumerate().rev() {
            let inv_std = bt.var.mapv(|v| 1.0 / (v + eps).sqrt());
            let dzs: Vec<Array2<f64>> = d_acts
                .par_iter()
                .enumerate()
                .map(|(i, da)| {
                    let dr = avg_pool_backward(da, p, bt.in_len[i]);
                    let mut dz = dr;
                    dz.zip_mut_with(&bt.active[i], |v, &on| {
                        if !on {
                            *v = 0.0
                        }
                    });
                    dz
                })
                .collect();
            let gb = &mut g.blocks[b];
            for (dz, xhat) in dzs.iter().zip(&bt.xhat) {
                gb.beta += &dz.sum_axis(Axis(0));
                gb.gamma += &(dz * xhat).sum_axis(Axis(0));
            }
            let scale = &block.gamma * &inv_std;
            let dus: Vec<Array2<f64>> = match tape.mode {
                BnMode::Inference => dzs.into_iter().map(|dz| dz * &scale).collect(),
                BnMode::Train => {
                    let n: usize = bt.in_len.iter().sum();
                    let mean_dz = &gb.beta / n as f64;
                    let mean_dzx = &gb.gamma / n as f64;
                    dzs.into_par_iter()
                        .zip(bt.xhat.par_iter())
                        .map(|(dz, xhat)| (dz - &mean_dz - xhat * &mean_dzx) * &scale)
                        .collect()
                }
            };
            for (du, col) in dus.iter().zip(&bt.cols) {
                gb.bias += &du.sum_axis(Axis(0));
                gb.weight += &col.t().dot(du);
            }
            if b > 0 {
                let c_in = block.weight.nrows() / k;
                d_acts = dus.par_iter().map(|du| col2im(&du.dot(&block.weight.t()), k, c_in)).collect();
            }
        }
        g
    }

    /// Exponential moving average of the batch statistics in `tape`.
    pub fn update_running_stats(&mut self, tape: &EncoderTape) {
        let m = self.config.bn_momentum;
        for (block, bt) in self.blocks.iter_mut().zip(&tape.blocks) {
            block.running_mean = &block.running_mean * (1.0 - m) + &bt.mean * m;
            block.running_var = &block.running_var * (1.0 - m) + &bt.var * m;
        }
    }

    pub fn export(&self, table: &mut TensorTable) {
        for (i, b) in self.blocks.iter().enumerate() {
            table.put(format!("encoder.block{i}.weight"), &b.weight);
            table.put(format!("encoder.block{i}.bias"), &b.bias);
            table.put(format!("encoder.block{i}.gamma"), &b.gamma);
            table.put(format!("encoder.block{i}.beta"), &b.beta);
            table.put(format!("encoder.block{i}.running_mean"), &b.running_mean);
            table.put(format!("encoder.block{i}.running_var"), &b.running_var);
        }
        table.put("encoder.w1", &self.w1);
        table.put("encoder.b1", &self.b1);
        table.put("encoder.w2", &self.w2);
        table.put("encoder.b2", &self.b2);
    }

    pub fn import(config: &EncoderConfig, table: &TensorTable) -> Result<Self> {
        let mut p = EncoderParams::init(config, 0)?;
        for (i, b) in p.blocks.iter_mut().enumerate() {
            let (r, c) = b.weight.dim();
            b.weight = table.get2(&format!("encoder.block{i}.weight"), (r, c))?;
            b.bias = table.get1(&format!("encoder.block{i}.bias"), c)?;
            b.gamma = table.get1(&format!("encoder.block{i}.gamma"), c)?;
            b.beta = table.get1(&format!("encoder.block{i}.beta"), c)?;
            b.running_mean = table.get1(&format!("encoder.block{i}.running_mean"), c)?;
            b.running_var = table.get1(&format!("encoder.block{i}.running_var"), c)?;
        }
        p.w1 = table.get2("encoder.w1", p.w1.dim())?;
        p.b1 = table.get1("encoder.b1", p.b1.len())?;
        p.w2 = table.get2("encoder.w2", p.w2.dim())?;
        p.b2 = table.get1("encoder.b2", p.b2.len())?;
        Ok(p)
    }
}

fn outer(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Array2<f64> {
    a.insert_axis(Axis(1)).dot(&b.insert_axis(Axis(0)))
}
