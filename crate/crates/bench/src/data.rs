use std::collections::HashSet;

use meit_core::instruct::{
    build_samples, direct_example, tokenize_example, InstructionSample, PromptPool, Split, TokenizedExample, Vocabulary,
};
use meit_core::rng;
use meit_core::signal::{plan_corpus, CorpusPlan, Domain, SyntheticLabel};
use serde::{Deserialize, Serialize};

use crate::config::BenchConfig;
use crate::error::{BenchError, Result};

/// How training sequences are built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Prompt, template and response-only loss.
    Instruct,
    /// Report-only sequences with loss on every token.
    Direct,
}

/// The corpus plan, vocabulary and instruction samples of a config.
/// Everything here is a pure function of the config.
pub struct Forged {
    pub plan: CorpusPlan,
    pub pool: PromptPool,
    pub vocab: Vocabulary,
    /// Domain A samples followed by domain B samples.
    pub samples: Vec<InstructionSample>,
    pub max_seq_len: usize,
}

impl Forged {
    pub fn new(cfg: &BenchConfig) -> Result<Self> {
        cfg.validate()?;
        let plan = plan_corpus(&cfg.corpus, cfg.seed)?;
        let pool = PromptPool::v1();
        let mut samples = Vec::with_capacity(plan.len());
        for domain in [Domain::A, Domain::B] {
            let items = plan.domain(domain);
            let pairs: Vec<(&str, &str)> = items.iter().map(|it| (it.record_id.as_str(), it.report.as_str())).collect();
            if pairs.is_empty() {
                continue;
            }
            let seed = rng::derive(cfg.seed, &[0xF0, domain.tag() as u64]);
            let mut s = build_samples(&pairs, &pool, cfg.data.split, seed)?;
            let tag = domain.as_str();
            s.iter_mut().for_each(|x| x.id = format!("{tag}{}", &x.id[1..]));
            samples.extend(s);
        }
        let mut texts: Vec<&str> = pool.prompts().iter().map(String::as_str).collect();
        texts.extend(samples.iter().map(|s| s.report_text.as_str()));
        let vocab = Vocabulary::build(texts, cfg.data.vocab_size)?;
        let forged = Forged { plan, pool, vocab, samples, max_seq_len: cfg.model.max_seq_len };
        forged.check_leakage()?;
        Ok(forged)
    }

    pub fn select(&self, domain: Domain, split: Split) -> Vec<&InstructionSample> {
        self.samples
            .iter()
            .filter(|s| s.split == split && self.plan.get(&s.ecg_ref).is_some_and(|it| it.label.domain == domain))
            .collect()
    }

    pub fn tokenize(&self, samples: &[&InstructionSample], mode: Mode) -> Result<Vec<TokenizedExample>> {
        samples
            .iter()
            .map(|s| match mode {
                Mode::Instruct => tokenize_example(s, &self.vocab, self.max_seq_len),
                Mode::Direct => direct_example(&s.report_text, &s.ecg_ref, &self.vocab, self.max_seq_len),
            })
            .collect::<meit_core::Result<_>>()
            .map_err(Into::into)
    }

    pub fn label(&self, ecg_ref: &str) -> Option<SyntheticLabel> {
        self.plan.get(ecg_ref).map(|it| it.label)
    }

    fn check_leakage(&self) -> Result<()> {
        let train: HashSet<&str> =
            self.samples.iter().filter(|s| s.split == Split::Train).map(|s| s.ecg_ref.as_str()).collect();
        if let Some(s) = self.samples.iter().find(|s| s.split != Split::Train && train.contains(s.ecg_ref.as_str())) {
            return Err(BenchError::Leakage(format!("record {} is in train and {:?}", s.ecg_ref, s.split)));
        }
        Ok(())
    }
}
