use std::path::{Path, PathBuf};

use meit_core::encoder::EncoderConfig;
use meit_core::instruct::SplitRatios;
use meit_core::model::{LoraConfig, ModelConfig};
use meit_core::signal::CorpusConfig;
use meit_core::train::TrainConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{BenchError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub vocab_size: usize,
    pub split: SplitRatios,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig { vocab_size: 512, split: SplitRatios::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub max_new_tokens: usize,
    /// Cap on evaluated test records per domain (0 = whole split).
    pub test_limit: usize,
    pub noise_levels: Vec<f64>,
    /// Share of the test split perturbed in the noise task.
    pub noise_fraction: f64,
    pub noise_seed: u64,
    /// Generated/reference pairs kept for the qualitative dump.
    pub sample_dump: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            max_new_tokens: 32,
            test_limit: 0,
            noise_levels: vec![0.0, 0.05, 0.1, 0.15, 0.2],
            noise_fraction: 0.1,
            noise_seed: 99,
            sample_dump: 8,
        }
    }
}

/// Everything a benchmark run depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub corpus: CorpusConfig,
    pub data: DataConfig,
    /// `vocab_size` is replaced by the size of the built vocabulary.
    pub model: ModelConfig,
    pub lora: LoraConfig,
    /// `head_dim` is replaced by the model's head dimension.
    pub encoder: EncoderConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            seed: 7,
            output_dir: PathBuf::from("meit-out"),
            corpus: CorpusConfig::default(),
            data: DataConfig::default(),
            model: ModelConfig { num_layers: 2, num_heads: 4, head_dim: 32, max_seq_len: 64, ..Default::default() },
            lora: LoraConfig::default(),
            encoder: EncoderConfig { channels: vec![16, 32, 64], ..Default::default() },
            train: TrainConfig { learning_rate: 2e-3, ..Default::default() },
            eval: EvalConfig::default(),
        }
    }
}

impl BenchConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        let cfg: BenchConfig = toml::from_str(&text).map_err(|e| BenchError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(BenchError::Config(m));
        if self.data.vocab_size < 8 {
            return bad("data.vocab_size must be at least 8".into());
        }
        if self.eval.max_new_tokens == 0 {
            return bad("eval.max_new_tokens must be positive".into());
        }
        if !(self.eval.noise_fraction > 0.0 && self.eval.noise_fraction <= 1.0) {
            return bad("eval.noise_fraction must lie in (0, 1]".into());
        }
        if self.eval.noise_levels.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return bad("noise levels must be nonnegative".into());
        }
        if self.eval.noise_levels.windows(2).any(|w| w[1] <= w[0]) {
            return bad("noise levels must be strictly ascending".into());
        }
        self.train.validate()?;
        self.encoder_config().validate()?;
        Ok(())
    }

    pub fn encoder_config(&self) -> EncoderConfig {
        EncoderConfig { head_dim: self.model.head_dim, ..self.encoder.clone() }
    }

    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig { vocab_size, ..self.model.clone() }
    }

    /// SHA-256 of the canonical TOML form, minus the output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        hex(&Sha256::digest(c.to_toml().as_bytes()))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
