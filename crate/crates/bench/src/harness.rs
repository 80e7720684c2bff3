use std::collections::HashMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use meit_core::encoder::EncoderParams;
use meit_core::infer::{generate_reports, GenOptions};
use meit_core::instruct::{InstructionSample, Split, TokenizedExample};
use meit_core::model::{Decode, ModelParams};
use meit_core::rng;
use meit_core::signal::{Domain, RhythmClass};
use meit_core::train::{load_checkpoint, save_checkpoint, Checkpoint, EpochLog, TrainConfig, TrainLog, TrainState, Trainer};
use meit_metrics::MetricReport;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{hex, BenchConfig};
use crate::data::{Forged, Mode};
use crate::error::{BenchError, Result};
use crate::keywords::keyword_accuracy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Quality,
    Zeroshot,
    Noise,
    Ablation,
}

impl Task {
    pub const ALL: [Task; 4] = [Task::Quality, Task::Zeroshot, Task::Noise, Task::Ablation];

    pub fn name(self) -> &'static str {
        match self {
            Task::Quality => "quality",
            Task::Zeroshot => "zeroshot",
            Task::Noise => "noise",
            Task::Ablation => "ablation",
        }
    }
}

impl FromStr for Task {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        Task::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| BenchError::Config(format!("unknown task {s:?}")))
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The trained (or untrained) models a benchmark can ask for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKey {
    Untrained,
    InstructA,
    InstructB,
    DirectA,
}

impl ModelKey {
    pub fn name(self) -> &'static str {
        match self {
            ModelKey::Untrained => "untrained",
            ModelKey::InstructA => "instruct_a",
            ModelKey::InstructB => "instruct_b",
            ModelKey::DirectA => "direct_a",
        }
    }

    pub const ALL: [ModelKey; 4] = [ModelKey::Untrained, ModelKey::InstructA, ModelKey::InstructB, ModelKey::DirectA];

    pub fn from_parts(domain: Domain, mode: Mode) -> Result<Self> {
        match (domain, mode) {
            (Domain::A, Mode::Instruct) => Ok(ModelKey::InstructA),
            (Domain::B, Mode::Instruct) => Ok(ModelKey::InstructB),
            (Domain::A, Mode::Direct) => Ok(ModelKey::DirectA),
            _ => Err(BenchError::Config(format!("no model for domain {} in {mode:?} mode", domain.as_str()))),
        }
    }

    fn training(self) -> Option<(Domain, Mode)> {
        match self {
            ModelKey::Untrained => None,
            ModelKey::InstructA => Some((Domain::A, Mode::Instruct)),
            ModelKey::InstructB => Some((Domain::B, Mode::Instruct)),
            ModelKey::DirectA => Some((Domain::A, Mode::Direct)),
        }
    }
}

impl FromStr for ModelKey {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        ModelKey::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| BenchError::Config(format!("unknown model {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trained {
    pub state: TrainState,
    pub log: TrainLog,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePair {
    pub id: String,
    pub ecg_ref: String,
    pub prompt: String,
    pub reference: String,
    pub generated: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub label: String,
    pub model: ModelKey,
    pub metrics: MetricReport,
    /// Mean of BLEU-3, BLEU-4, METEOR and ROUGE-L.
    pub composite: f64,
    pub keyword_accuracy: f64,
    pub records: usize,
    pub train_steps: usize,
    pub noise_level: Option<f64>,
    pub zero_prefix: bool,
    /// Hash of test ids, tokenizer and decode settings.
    pub eval_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub label: String,
    pub epochs: Vec<EpochLog>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub task: Task,
    pub seed: u64,
    pub config_hash: String,
    pub config: BenchConfig,
    pub conditions: Vec<Condition>,
    /// Untrained reference, when the task compares against one.
    pub baseline: Option<Condition>,
    pub samples: Vec<SamplePair>,
    pub curves: Vec<Curve>,
    /// Files written by the report emitter for this task.
    pub artifacts: Vec<String>,
}

impl BenchResult {
    pub fn condition(&self, label: &str) -> Option<&Condition> {
        self.conditions.iter().find(|c| c.label == label)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes")
    }

    /// Errors unless every condition shares one evaluation hash.
    pub fn check_comparable(&self) -> Result<()> {
        let mut all = self.conditions.iter().chain(&self.baseline);
        if let Some(first) = all.next() {
            if let Some(c) = all.find(|c| c.eval_hash != first.eval_hash) {
                return Err(BenchError::Comparability(format!(
                    "{} and {} were evaluated on different test settings",
                    first.label, c.label
                )));
            }
        }
        Ok(())
    }
}

/// Evaluation options of one condition.
#[derive(Debug, Clone, Copy, Default)]
pub struct EvalSpec {
    pub zero_prefix: bool,
    pub noise_level: Option<f64>,
    /// Evaluate the noise subset instead of the whole test split.
    pub noise_subset: bool,
}

/// Shared state of a benchmark session: forged data plus every model
/// trained so far, so tasks run in one session reuse each other's models.
pub struct Bench {
    pub config: BenchConfig,
    pub data: Forged,
    models: HashMap<ModelKey, Trained>,
    checkpoint_dir: Option<PathBuf>,
}

impl Bench {
    pub fn new(config: BenchConfig) -> Result<Self> {
        let data = Forged::new(&config)?;
        Ok(Bench { config, data, models: HashMap::new(), checkpoint_dir: None })
    }

    /// Persist trained models under `dir` and reuse matching ones found there.
    pub fn with_checkpoints(mut self, dir: impl Into<PathBuf>) -> Self {
        self.checkpoint_dir = Some(dir.into());
        self
    }

    /// Hash of everything that influences training.
    pub fn train_hash(&self) -> String {
        let c = &self.config;
        let key = serde_json::json!({
            "seed": c.seed, "corpus": c.corpus, "data": c.data, "model": c.model,
            "lora": c.lora, "encoder": c.encoder, "train": c.train,
        });
        hex(&Sha256::digest(key.to_string().as_bytes()))[..16].to_owned()
    }

    pub fn initial_state(&self) -> Result<(ModelParams, EncoderParams)> {
        let seed = self.config.seed;
        let mut model = ModelParams::init(&self.config.model_config(self.data.vocab.len()), rng::derive(seed, &[0x30]))?;
        model.apply_lora(&self.config.lora, rng::derive(seed, &[0x31]))?;
        let encoder = EncoderParams::init(&self.config.encoder_config(), rng::derive(seed, &[0x32]))?;
        Ok((model, encoder))
    }

    pub fn train_config(&self, domain: Domain) -> TrainConfig {
        TrainConfig {
            seed: rng::derive(self.config.seed, &[0x33, domain.tag() as u64]),
            max_new_tokens: self.config.eval.max_new_tokens,
            ..self.config.train.clone()
        }
    }

    pub fn checkpoint_path(&self, key: ModelKey) -> Option<PathBuf> {
        self.checkpoint_dir.as_ref().map(|d| d.join(format!("{}-{}.ckpt", key.name(), self.train_hash())))
    }

    pub fn model(&mut self, key: ModelKey) -> Result<&Trained> {
        if !self.models.contains_key(&key) {
            let t = self.build_model(key)?;
            self.models.insert(key, t);
        }
        Ok(&self.models[&key])
    }

    /// Inserts an externally trained model (for example one loaded from a checkpoint).
    pub fn insert_model(&mut self, key: ModelKey, trained: Trained) {
        self.models.insert(key, trained);
    }

    fn build_model(&self, key: ModelKey) -> Result<Trained> {
        let (model, encoder) = self.initial_state()?;
        let Some((domain, mode)) = key.training() else {
            let cfg = self.train_config(Domain::A);
            let optimizer =
                meit_core::train::AdamW::new(0, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay);
            return Ok(Trained { state: TrainState { model, encoder, optimizer, step: 0 }, log: TrainLog::default() });
        };
        let hash = self.data.vocab.hash();
        if let Some(path) = self.checkpoint_path(key) {
            let log_path = path.with_extension("log.json");
            if path.exists() && log_path.exists() {
                let ck = load_checkpoint(&path, Some(&hash))?;
                let log: TrainLog = serde_json::from_str(&std::fs::read_to_string(&log_path)?)?;
                return Ok(Trained { state: ck.state, log });
            }
        }
        let train = self.data.tokenize(&self.data.select(domain, Split::Train), mode)?;
        // validation always uses the instruction format that evaluation uses
        let val = self.data.tokenize(&self.data.select(domain, Split::Val), Mode::Instruct)?;
        let cfg = self.train_config(domain);
        let trainer = Trainer::new(cfg.clone(), &train, &val, &self.data.plan, &self.data.vocab)?;
        let (state, log) = trainer.fit(model, encoder)?;
        if let Some(path) = self.checkpoint_path(key) {
            if let Some(dir) = path.parent() {
                std::fs::create_dir_all(dir)?;
            }
            save_checkpoint(&path, &Checkpoint::new(state.clone(), Some(self.config.lora.clone()), cfg, hash))?;
            std::fs::write(path.with_extension("log.json"), serde_json::to_string(&log)?)?;
            log.write_csv(path.with_extension("log.csv"))?;
        }
        Ok(Trained { state, log })
    }

    /// Test samples of a domain, capped by `eval.test_limit`.
    pub fn test_samples(&self, domain: Domain) -> Vec<&InstructionSample> {
        let mut s = self.data.select(domain, Split::Test);
        if self.config.eval.test_limit > 0 {
            s.truncate(self.config.eval.test_limit);
        }
        s
    }

    /// The seeded noise subset of the test split, in split order.
    pub fn noise_samples(&self, domain: Domain) -> Vec<&InstructionSample> {
        let all = self.test_samples(domain);
        let k = ((self.config.eval.noise_fraction * all.len() as f64).ceil() as usize).clamp(1.min(all.len()), all.len());
        let mut idx: Vec<usize> = (0..all.len()).collect();
        use rand::seq::SliceRandom;
        idx.shuffle(&mut rng::stream(self.config.eval.noise_seed, &[0x5B]));
        idx.truncate(k);
        idx.sort_unstable();
        idx.into_iter().map(|i| all[i]).collect()
    }

    fn decode_options(&self, spec: EvalSpec) -> GenOptions {
        GenOptions {
            decode: Decode::Greedy,
            max_new_tokens: self.config.eval.max_new_tokens,
            zero_prefix: spec.zero_prefix,
            noise: spec.noise_level.map(|l| (l, self.config.eval.noise_seed)),
            ..Default::default()
        }
    }

    fn eval_hash(&self, samples: &[&InstructionSample]) -> String {
        let mut h = Sha256::new();
        for s in samples {
            h.update(s.id.as_bytes());
            h.update([0]);
            h.update(s.prompt_text.as_bytes());
            h.update([0]);
        }
        h.update(self.data.vocab.hash().as_bytes());
        h.update(format!("greedy/{}", self.config.eval.max_new_tokens).as_bytes());
        hex(&h.finalize())[..16].to_owned()
    }

    /// Greedy reports of `key` on the given samples.
    pub fn generate(&mut self, key: ModelKey, samples: &[&InstructionSample], spec: EvalSpec) -> Result<Vec<String>> {
        let examples: Vec<TokenizedExample> = self.data.tokenize(samples, Mode::Instruct)?;
        let opts = self.decode_options(spec);
        self.model(key)?;
        let t = &self.models[&key];
        Ok(generate_reports(&t.state.model, &t.state.encoder, &self.data.vocab, &examples, &self.data.plan, &opts)?)
    }

    /// Generates and scores one condition on a domain's test split.
    pub fn evaluate(&mut self, label: &str, key: ModelKey, domain: Domain, spec: EvalSpec) -> Result<(Condition, Vec<SamplePair>)> {
        let samples: Vec<InstructionSample> = if spec.noise_subset {
            self.noise_samples(domain).into_iter().cloned().collect()
        } else {
            self.test_samples(domain).into_iter().cloned().collect()
        };
        if samples.is_empty() {
            return Err(BenchError::Config(format!("domain {} has an empty test split", domain.as_str())));
        }
        let refs: Vec<&InstructionSample> = samples.iter().collect();
        let hyps = self.generate(key, &refs, spec)?;
        let references: Vec<&str> = samples.iter().map(|s| s.report_text.as_str()).collect();
        let labels: Vec<RhythmClass> = samples
            .iter()
            .map(|s| self.data.label(&s.ecg_ref).map(|l| l.rhythm_class))
            .collect::<Option<_>>()
            .ok_or_else(|| BenchError::Config("test record without a label".into()))?;
        let metrics = meit_metrics::evaluate(&hyps, &references)?;
        let condition = Condition {
            label: label.to_owned(),
            model: key,
            composite: metrics.composite(),
            metrics,
            keyword_accuracy: keyword_accuracy(&hyps, &labels),
            records: samples.len(),
            train_steps: self.models[&key].state.step,
            noise_level: spec.noise_level,
            zero_prefix: spec.zero_prefix,
            eval_hash: self.eval_hash(&refs),
        };
        let pairs = samples
            .iter()
            .zip(hyps)
            .map(|(s, g)| SamplePair {
                id: s.id.clone(),
                ecg_ref: s.ecg_ref.clone(),
                prompt: s.prompt_text.clone(),
                reference: s.report_text.clone(),
                generated: g,
            })
            .collect();
        Ok((condition, pairs))
    }

    fn curve(&mut self, key: ModelKey) -> Result<Curve> {
        Ok(Curve { label: key.name().to_owned(), epochs: self.model(key)?.log.epochs.clone() })
    }

    fn result(&self, task: Task, conditions: Vec<Condition>, baseline: Option<Condition>, samples: Vec<SamplePair>, curves: Vec<Curve>) -> Result<BenchResult> {
        let r = BenchResult {
            task,
            seed: self.config.seed,
            config_hash: self.config.hash(),
            config: self.config.clone(),
            conditions,
            baseline,
            samples,
            curves,
            artifacts: crate::report::artifact_names(task),
        };
        r.check_comparable()?;
        Ok(r)
    }

    pub fn run_quality(&mut self) -> Result<BenchResult> {
        let (it, pairs) = self.evaluate("Instruction tuned", ModelKey::InstructA, Domain::A, EvalSpec::default())?;
        let zero = EvalSpec { zero_prefix: true, ..Default::default() };
        let (zp, _) = self.evaluate("Zeroed ECG prefix", ModelKey::InstructA, Domain::A, zero)?;
        let (base, _) = self.evaluate("Untrained", ModelKey::Untrained, Domain::A, EvalSpec::default())?;
        let k = self.config.eval.sample_dump;
        let samples = pairs.into_iter().take(k).collect();
        let curves = vec![self.curve(ModelKey::InstructA)?];
        self.result(Task::Quality, vec![it, zp], Some(base), samples, curves)
    }

    pub fn run_zeroshot(&mut self) -> Result<BenchResult> {
        let spec = EvalSpec::default();
        let (zs, pairs) = self.evaluate("Zero-shot IT", ModelKey::InstructA, Domain::B, spec)?;
        let (wo, _) = self.evaluate("Zero-shot w/o IT", ModelKey::Untrained, Domain::B, spec)?;
        let (tg, _) = self.evaluate("Target IT", ModelKey::InstructB, Domain::B, spec)?;
        let samples = pairs.into_iter().take(self.config.eval.sample_dump).collect();
        let curves = vec![self.curve(ModelKey::InstructA)?, self.curve(ModelKey::InstructB)?];
        self.result(Task::Zeroshot, vec![zs, wo, tg], None, samples, curves)
    }

    pub fn run_noise(&mut self) -> Result<BenchResult> {
        let mut conditions = Vec::new();
        for level in self.config.eval.noise_levels.clone() {
            let spec = EvalSpec { noise_level: Some(level), noise_subset: true, ..Default::default() };
            let (c, _) = self.evaluate(&format!("level {level}"), ModelKey::InstructA, Domain::A, spec)?;
            conditions.push(c);
        }
        self.result(Task::Noise, conditions, None, vec![], vec![])
    }

    pub fn run_ablation(&mut self) -> Result<BenchResult> {
        let spec = EvalSpec::default();
        let (it, _) = self.evaluate("Instruction tuning", ModelKey::InstructA, Domain::A, spec)?;
        let (ft, pairs) = self.evaluate("Direct fine-tuning", ModelKey::DirectA, Domain::A, spec)?;
        let (base, _) = self.evaluate("Untrained", ModelKey::Untrained, Domain::A, spec)?;
        let samples = pairs.into_iter().take(self.config.eval.sample_dump).collect();
        let curves = vec![self.curve(ModelKey::InstructA)?, self.curve(ModelKey::DirectA)?];
        self.result(Task::Ablation, vec![it, ft], Some(base), samples, curves)
    }

    pub fn run(&mut self, task: Task) -> Result<BenchResult> {
        match task {
            Task::Quality => self.run_quality(),
            Task::Zeroshot => self.run_zeroshot(),
            Task::Noise => self.run_noise(),
            Task::Ablation => self.run_ablation(),
        }
    }
}

pub fn run_quality(config: BenchConfig) -> Result<BenchResult> {
    Bench::new(config)?.run_quality()
}

pub fn run_zeroshot(config: BenchConfig) -> Result<BenchResult> {
    Bench::new(config)?.run_zeroshot()
}

pub fn run_noise(config: BenchConfig) -> Result<BenchResult> {
    Bench::new(config)?.run_noise()
}

pub fn run_ablation(config: BenchConfig) -> Result<BenchResult> {
    Bench::new(config)?.run_ablation()
}
