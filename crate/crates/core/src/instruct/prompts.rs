use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{arg, Result};
use crate::rng;

/// A versioned, immutable list of instruction prompts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptPool {
    prompts: Vec<String>,
    version: String,
}

const V1: [&str; 12] = [
    "Describe this ECG.",
    "Write a report for the following ECG recording.",
    "Generate an accurate description of this ECG signal.",
    "What does this electrocardiogram show?",
    "Please interpret the ECG and write a short report.",
    "Summarize the findings of this 12-lead ECG.",
    "Provide a clinical report for this ECG tracing.",
    "Give a concise interpretation of the attached ECG.",
    "Read this ECG and report the rhythm and rate.",
    "Produce the diagnostic statement for this ECG.",
    "Analyze the ECG signal and describe the findings.",
    "Write the ECG report for this recording.",
];

impl PromptPool {
    pub fn new(prompts: Vec<String>, version: impl Into<String>) -> Result<Self> {
        if prompts.is_empty() {
            return arg("prompt pool is empty");
        }
        for (i, p) in prompts.iter().enumerate() {
            if p.trim().is_empty() {
                return arg(format!("prompt {i} is blank"));
            }
            if prompts[..i].contains(p) {
                return arg(format!("duplicate prompt {p:?}"));
            }
        }
        Ok(PromptPool { prompts, version: version.into() })
    }

    /// The built-in pool, version "v1".
    pub fn v1() -> Self {
        PromptPool { prompts: V1.iter().map(|s| s.to_string()).collect(), version: "v1".into() }
    }

    pub fn prompts(&self) -> &[String] {
        &self.prompts
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn len(&self) -> usize {
        self.prompts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prompts.is_empty()
    }
}

pub fn sample_prompt(pool: &PromptPool, seed: u64) -> &str {
    let i = rng::stream(seed, &[0x9807]).random_range(0..pool.len());
    &pool.prompts[i]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn v1_is_valid() {
        let p = PromptPool::v1();
        assert_eq!(p.len(), 12);
        assert_eq!(PromptPool::new(p.prompts().to_vec(), "v1").unwrap(), p);
    }

    #[test]
    fn rejects_empty_and_duplicates() {
        assert!(PromptPool::new(vec![], "x").is_err());
        assert!(PromptPool::new(vec!["a".into(), "a".into()], "x").is_err());
        assert!(PromptPool::new(vec!["  ".into()], "x").is_err());
    }

    #[test]
    fn singleton_pool_is_forced() {
        let p = PromptPool::new(vec!["only".into()], "t").unwrap();
        for s in 0..20 {
            assert_eq!(sample_prompt(&p, s), "only");
        }
    }

    #[test]
    fn draws_are_seeded_and_roughly_uniform() {
        let p = PromptPool::new((0..10).map(|i| format!("p{i}")).collect(), "t").unwrap();
        assert_eq!(sample_prompt(&p, 42), sample_prompt(&p, 42));
        let mut counts = [0usize; 10];
        for s in 0..10_000u64 {
            let q = sample_prompt(&p, s);
            counts[q[1..].parse::<usize>().unwrap()] += 1;
        }
        assert!(counts.iter().all(|&c| (800..=1200).contains(&c)), "{counts:?}");
    }
}
