use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adamw::{clip_global_norm, AdamW};
use super::loss::masked_nll;
use super::schedule::LinearSchedule;
use crate::encoder::{normalize_record, BnMode, EncoderParams};
use crate::error::{arg, Error, Result};
use crate::infer::{generate_reports, GenOptions};
use crate::instruct::{TokenizedExample, Vocabulary};
use crate::model::{ForwardOptions, ModelGrads, ModelParams};
use crate::rng;
use crate::signal::EcgSource;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    Double,
    /// Parameters and optimizer moments are rounded to f32 after every step.
    Single,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub warmup_ratio: f64,
    pub weight_decay: f64,
    /// Global gradient-norm bound; 0 turns clipping off.
    pub grad_clip: f64,
    pub seed: u64,
    pub precision: Precision,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// When false the encoder is frozen along with the backbone.
    pub train_encoder: bool,
    /// Validation examples decoded for the per-epoch METEOR (0 = all).
    pub val_meteor_samples: usize,
    pub max_new_tokens: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            batch_size: 16,
            epochs: 5,
            warmup_ratio: 0.03,
            weight_decay: 0.0,
            grad_clip: 1.0,
            seed: 0,
            precision: Precision::Double,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            train_encoder: true,
            val_meteor_samples: 64,
            max_new_tokens: 48,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return arg("learning_rate must be positive");
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return arg("batch_size and epochs must be positive");
        }
        if !(0.0..1.0).contains(&self.warmup_ratio) {
            return arg("warmup_ratio must lie in [0, 1)");
        }
        if self.weight_decay < 0.0 || self.grad_clip < 0.0 {
            return arg("weight_decay and grad_clip must be non-negative");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.eps <= 0.0 {
            return arg("invalid Adam hyperparameters");
        }
        Ok(())
    }
}

/// Everything that changes during training.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub model: ModelParams,
    pub encoder: EncoderParams,
    pub optimizer: AdamW,
    /// Completed optimizer steps.
    pub step: usize,
}

impl TrainState {
    fn num_trainable(model: &ModelParams, encoder: &EncoderParams, train_encoder: bool) -> usize {
        model.count_trainable() + if train_encoder { encoder.count_trainable() } else { 0 }
    }

    fn round_to_f32(&mut self, train_encoder: bool) {
        let r = |v: &mut [f64]| v.iter_mut().for_each(|x| *x = *x as f32 as f64);
        for (_, p) in self.model.trainable_mut() {
            r(p);
        }
        if train_encoder {
            for (_, p) in self.encoder.trainable_mut() {
                r(p);
            }
            for b in &mut self.encoder.blocks {
                r(b.running_mean.as_slice_mut().unwrap());
                r(b.running_var.as_slice_mut().unwrap());
            }
        }
        r(&mut self.optimizer.m);
        r(&mut self.optimizer.v);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_meteor: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean of the logged step losses of this epoch.
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_meteor: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub steps: Vec<StepLog>,
    pub epochs: Vec<EpochLog>,
}

impl TrainLog {
    pub fn losses(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.train_loss).collect()
    }

    /// CSV with columns step, lr, train_loss, val_loss, val_meteor. Validation
    /// cells are empty except on epoch-closing steps.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "step,lr,train_loss,val_loss,val_meteor")?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for s in &self.steps {
            writeln!(f, "{},{},{},{},{}", s.step, s.lr, s.train_loss, opt(s.val_loss), opt(s.val_meteor))?;
        }
        f.flush()?;
        Ok(())
    }
}

/// Training loop over fixed tokenized data.
///
/// Batches follow a per-epoch permutation derived from the seed, so any step
/// can be recomputed from `(seed, step)` alone and resuming from a saved
/// state replays the uninterrupted run exactly.
pub struct Trainer<'a> {
    pub config: TrainConfig,
    pub train: &'a [TokenizedExample],
    pub val: &'a [TokenizedExample],
    pub source: &'a dyn EcgSource,
    pub vocab: &'a Vocabulary,
}

impl<'a> Trainer<'a> {
    pub fn new(
        config: TrainConfig,
        train: &'a [TokenizedExample],
        val: &'a [TokenizedExample],
        source: &'a dyn EcgSource,
        vocab: &'a Vocabulary,
    ) -> Result<Self> {
        config.validate()?;
        if train.is_empty() {
            return Err(Error::Data("empty training set".into()));
        }
        for ex in train.iter().chain(val) {
            if !ex.loss_mask.contains(&true) {
                return Err(Error::EmptyMask);
            }
        }
        Ok(Trainer { config, train, val, source, vocab })
    }

    pub fn steps_per_epoch(&self) -> usize {
        self.train.len().div_ceil(self.config.batch_size)
    }

    pub fn total_steps(&self) -> usize {
        self.steps_per_epoch() * self.config.epochs
    }

    pub fn schedule(&self) -> LinearSchedule {
        LinearSchedule::new(self.config.learning_rate, self.total_steps(), self.config.warmup_ratio)
    }

    pub fn init_state(&self, model: ModelParams, encoder: EncoderParams) -> Result<TrainState> {
        if !model.has_lora() {
            return arg("model has no adapters to train");
        }
        let n = TrainState::num_trainable(&model, &encoder, self.config.train_encoder);
        let c = &self.config;
        let optimizer = AdamW::new(n, c.beta1, c.beta2, c.eps, c.weight_decay);
        Ok(TrainState { model, encoder, optimizer, step: 0 })
    }

    /// Example indices used by the 0-based `step`.
    pub fn batch_indices(&self, step: usize) -> Vec<usize> {
        let spe = self.steps_per_epoch();
        let (epoch, b) = (step / spe, step % spe);
        let mut perm: Vec<usize> = (0..self.train.len()).collect();
        perm.shuffle(&mut rng::stream(self.config.seed, &[0xE90C, epoch as u64]));
        let start = b * self.config.batch_size;
        perm[start..(start + self.config.batch_size).min(perm.len())].to_vec()
    }

    fn load_inputs(&self, examples: &[&TokenizedExample]) -> Result<Vec<Array2<f64>>> {
        examples
            .par_iter()
            .map(|ex| self.source.load(&ex.ecg_ref).map(|r| normalize_record(&r)))
            .collect()
    }

    /// One optimizer step. Returns the batch loss.
    pub fn train_step(&self, state: &mut TrainState) -> Result<f64> {
        let step = state.step;
        let batch: Vec<&TokenizedExample> = self.batch_indices(step).into_iter().map(|i| &self.train[i]).collect();
        let xs = self.load_inputs(&batch)?;
        let (h, tape) = state.encoder.forward_batch(&xs, BnMode::Train)?;
        if h.iter().any(|e| e.iter().any(|v| !v.is_finite())) {
            return Err(Error::Divergence { step: step + 1, loss: f64::NAN });
        }
        let count: usize = batch.iter().map(|ex| ex.loss_mask.iter().skip(1).filter(|&&m| m).count()).sum();
        let norm = count as f64;
        let model = &state.model;
        let seed = self.config.seed;
        let per: Vec<(f64, ModelGrads, Array2<f64>)> = batch
            .par_iter()
            .zip(h.par_iter())
            .enumerate()
            .map(|(i, (ex, h_e))| {
                let opts = ForwardOptions {
                    dropout_seed: Some(rng::derive(seed, &[0xD809, step as u64, i as u64])),
                    ..Default::default()
                };
                let (logits, cache) = model.forward_train(&ex.token_ids, h_e, opts)?;
                let (nll, _, dlogits) = masked_nll(&logits, &ex.token_ids, &ex.loss_mask, norm)?;
                let (g, dh) = model.backward(&cache, &dlogits);
                Ok((nll, g, dh))
            })
            .collect::<Result<_>>()?;

        let mut total = 0.0;
        let mut grads = ModelGrads::zeros(model);
        let mut dh = Vec::with_capacity(per.len());
        for (nll, g, d) in per {
            total += nll;
            grads.add_assign(&g);
            dh.push(d);
        }
        let loss = total / norm;
        if !loss.is_finite() {
            return Err(Error::Divergence { step: step + 1, loss });
        }

        let mut flat: Vec<f64> = grads.slices().concat();
        if self.config.train_encoder {
            let eg = state.encoder.backward_batch(&tape, &dh);
            for (_, s) in eg.slices() {
                flat.extend_from_slice(s);
            }
        }
        let gnorm = clip_global_norm(&mut flat, self.config.grad_clip);
        if !gnorm.is_finite() {
            return Err(Error::Divergence { step: step + 1, loss: gnorm });
        }
        let lr = self.schedule().lr(step + 1);
        {
            let mut params: Vec<&mut [f64]> = state.model.trainable_mut().into_iter().map(|(_, p)| p).collect();
            if self.config.train_encoder {
                params.extend(state.encoder.trainable_mut().into_iter().map(|(_, p)| p));
            }
            state.optimizer.step(&mut params, &flat, lr);
        }
        if self.config.train_encoder {
            state.encoder.update_running_stats(&tape);
        }
        if self.config.precision == Precision::Single {
            state.round_to_f32(self.config.train_encoder);
        }
        state.step += 1;
        Ok(loss)
    }

    /// Mean masked loss over the validation set with inference-mode BN.
    pub fn val_loss(&self, state: &TrainState) -> Result<Option<f64>> {
        if self.val.is_empty() {
            return Ok(None);
        }
        let parts: Vec<(f64, usize)> = self
            .val
            .par_iter()
            .map(|ex| {
                let rec = self.source.load(&ex.ecg_ref)?;
                let h_e = state.encoder.encode(&rec)?;
                let logits = state.model.forward(&ex.token_ids, &h_e)?;
                let (nll, n, _) = masked_nll(&logits, &ex.token_ids, &ex.loss_mask, 1.0)?;
                Ok((nll, n))
            })
            .collect::<Result<_>>()?;
        let (s, n) = parts.iter().fold((0.0, 0), |(s, n), &(a, b)| (s + a, n + b));
        Ok(Some(s / n as f64))
    }

    /// Greedy-decoded METEOR on the first `val_meteor_samples` validation examples.
    pub fn val_meteor(&self, state: &TrainState) -> Result<Option<f64>> {
        if self.val.is_empty() {
            return Ok(None);
        }
        let k = match self.config.val_meteor_samples {
            0 => self.val.len(),
            k => k.min(self.val.len()),
        };
        let subset = &self.val[..k];
        let opts = GenOptions { max_new_tokens: self.config.max_new_tokens, ..Default::default() };
        let hyps = generate_reports(&state.model, &state.encoder, self.vocab, subset, self.source, &opts)?;
        let refs: Vec<String> = subset.iter().map(|ex| reference_text(ex, self.vocab)).collect::<Result<_>>()?;
        Ok(Some(meit_metrics::meteor(&hyps, &refs)?))
    }

    /// Runs until `until` completed steps (capped at the total), appending to `log`.
    pub fn run(&self, state: &mut TrainState, until: usize, log: &mut TrainLog) -> Result<()> {
        let until = until.min(self.total_steps());
        let spe = self.steps_per_epoch();
        let schedule = self.schedule();
        while state.step < until {
            let loss = self.train_step(state)?;
            log.steps.push(StepLog {
                step: state.step,
                lr: schedule.lr(state.step),
                train_loss: loss,
                val_loss: None,
                val_meteor: None,
            });
            if state.step % spe == 0 {
                let epoch = state.step / spe;
                let first = (epoch - 1) * spe;
                let losses: Vec<f64> = log.steps.iter().filter(|s| s.step > first).map(|s| s.train_loss).collect();
                let val_loss = self.val_loss(state)?;
                let val_meteor = self.val_meteor(state)?;
                let last = log.steps.last_mut().unwrap();
                last.val_loss = val_loss;
                last.val_meteor = val_meteor;
                log.epochs.push(EpochLog {
                    epoch,
                    train_loss: losses.iter().sum::<f64>() / losses.len() as f64,
                    val_loss,
                    val_meteor,
                });
            }
        }
        Ok(())
    }

    /// Full run from a fresh state.
    pub fn fit(&self, model: ModelParams, encoder: EncoderParams) -> Result<(TrainState, TrainLog)> {
        let mut state = self.init_state(model, encoder)?;
        let mut log = TrainLog::default();
        self.run(&mut state, self.total_steps(), &mut log)?;
        Ok((state, log))
    }
}

/// The ground-truth response text of a tokenized example.
pub fn reference_text(ex: &TokenizedExample, vocab: &Vocabulary) -> Result<String> {
    let eos = vocab.eos_id();
    let ids: Vec<u32> = ex.token_ids[ex.response_start..].iter().copied().filter(|&t| t != eos).collect();
    vocab.detokenize(&ids)
}
