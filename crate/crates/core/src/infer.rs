//! Batch report generation from tokenized prompts.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::EncoderParams;
use crate::error::Result;
use crate::instruct::{TokenizedExample, Vocabulary};
use crate::model::{generate_with, Decode, ModelParams, PrefixVisibility};
use crate::rng;
use crate::signal::{add_gaussian_noise, EcgSource, NoiseSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenOptions {
    pub decode: Decode,
    /// Capped per example so the prompt plus the response fits the context.
    pub max_new_tokens: usize,
    /// Replace the ECG embedding with zeros.
    pub zero_prefix: bool,
    pub prefix: PrefixVisibility,
    /// Relative noise level and base seed; record i uses `derive(seed, [i])`.
    pub noise: Option<(f64, u64)>,
}

impl Default for GenOptions {
    fn default() -> Self {
        GenOptions {
            decode: Decode::Greedy,
            max_new_tokens: 48,
            zero_prefix: false,
            prefix: PrefixVisibility::Visible,
            noise: None,
        }
    }
}

/// Generates one report per example, in order. The trailing `</s>` is
/// dropped before detokenizing.
pub fn generate_reports(
    model: &ModelParams,
    encoder: &EncoderParams,
    vocab: &Vocabulary,
    examples: &[TokenizedExample],
    source: &dyn EcgSource,
    opts: &GenOptions,
) -> Result<Vec<String>> {
    let marker = vocab.assistant_marker();
    let (eos, pad) = (vocab.eos_id(), vocab.pad_id());
    examples
        .par_iter()
        .enumerate()
        .map(|(i, ex)| {
            let mut rec = source.load(&ex.ecg_ref)?;
            if let Some((level, seed)) = opts.noise {
                rec = add_gaussian_noise(&rec, NoiseSpec::new(level, rng::derive(seed, &[i as u64]))?)?;
            }
            let mut h_e = encoder.encode(&rec)?;
            if opts.zero_prefix {
                h_e = Array2::zeros(h_e.raw_dim());
            }
            let prompt = ex.prompt_ids();
            let room = model.config.max_seq_len.saturating_sub(prompt.len());
            let decode = match opts.decode {
                Decode::TopK { k, seed } => Decode::TopK { k, seed: rng::derive(seed, &[i as u64]) },
                d => d,
            };
            let mut out =
                generate_with(model, prompt, &h_e, decode, opts.max_new_tokens.min(room), &marker, eos, pad, opts.prefix)?;
            if out.last() == Some(&eos) {
                out.pop();
            }
            vocab.detokenize(&out)
        })
        .collect()
}
