use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::prompts::{sample_prompt, PromptPool};
use super::template::{render_template, ASSISTANT, EOS, USER};
use super::vocab::Vocabulary;
use crate::error::{arg, Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructionSample {
    pub id: String,
    pub prompt_text: String,
    pub ecg_ref: String,
    pub report_text: String,
    pub split: Split,
}

/// One line of the instruction-dataset JSONL file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructionRecord {
    pub id: String,
    pub prompt: String,
    pub ecg_path: String,
    pub report: String,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedExample {
    pub token_ids: Vec<u32>,
    pub loss_mask: Vec<bool>,
    pub response_start: usize,
    pub ecg_ref: String,
}

impl TokenizedExample {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    /// The prompt side, ending with the assistant marker.
    pub fn prompt_ids(&self) -> &[u32] {
        &self.token_ids[..self.response_start]
    }
}

/// Tokenizes the rendered template and masks everything before the
/// response. Long responses lose their tail; the prompt is never cut.
pub fn tokenize_example(sample: &InstructionSample, vocab: &Vocabulary, max_seq_len: usize) -> Result<TokenizedExample> {
    render_template(&sample.prompt_text, &sample.report_text)?;
    let prompt = vocab.encode(&format!("{USER}: {} {ASSISTANT}:", sample.prompt_text));
    let mut response = vocab.encode(&format!(" {}{EOS}", sample.report_text));
    if prompt.len() >= max_seq_len {
        return Err(Error::ContextOverflow { len: prompt.len() + 1, max: max_seq_len });
    }
    response.truncate(max_seq_len - prompt.len());
    let j = prompt.len();
    let mut loss_mask = vec![false; j];
    loss_mask.resize(j + response.len(), true);
    let mut token_ids = prompt;
    token_ids.extend(response);
    Ok(TokenizedExample { token_ids, loss_mask, response_start: j, ecg_ref: sample.ecg_ref.clone() })
}

/// Report-only sequence `<|assistant|> : report </s>` with loss on every
/// token after the first, for fine-tuning without instructions.
pub fn direct_example(report: &str, ecg_ref: &str, vocab: &Vocabulary, max_seq_len: usize) -> Result<TokenizedExample> {
    render_template("x", report)?;
    if max_seq_len < 2 {
        return Err(Error::ContextOverflow { len: 2, max: max_seq_len });
    }
    let mut token_ids = vocab.assistant_marker();
    token_ids.extend(vocab.encode(&format!(" {report}{EOS}")));
    token_ids.truncate(max_seq_len);
    let mut loss_mask = vec![true; token_ids.len()];
    loss_mask[0] = false;
    Ok(TokenizedExample { token_ids, loss_mask, response_start: 1, ecg_ref: ecg_ref.to_owned() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitRatios {
    pub const fn new(train: f64, val: f64, test: f64) -> Self {
        SplitRatios { train, val, test }
    }
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios::new(0.8, 0.1, 0.1)
    }
}

/// Seeded partition of `0..n` with sizes floor(train·n), floor(val·n) and
/// the remainder.
pub fn split_dataset(n: usize, ratios: SplitRatios, seed: u64) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
    let r = [ratios.train, ratios.val, ratios.test];
    if r.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return arg(format!("split ratios {r:?} must be nonnegative and sum to 1"));
    }
    // the epsilon keeps products such as 0.57·100 from flooring to 56
    let size = |x: f64| ((x * n as f64 + 1e-9).floor() as usize).min(n);
    let n_train = size(ratios.train);
    let n_val = size(ratios.val).min(n - n_train);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::stream(seed, &[0x5917]));
    let test = idx.split_off(n_train + n_val);
    let val = idx.split_off(n_train);
    Ok((idx, val, test))
}

/// Pairs each `(record_id, report)` with a seeded prompt draw and assigns
/// splits with [`split_dataset`]. Output keeps the input order.
pub fn build_samples<'a>(
    records: &[(&'a str, &'a str)],
    pool: &PromptPool,
    ratios: SplitRatios,
    seed: u64,
) -> Result<Vec<InstructionSample>> {
    let (train, val, _) = split_dataset(records.len(), ratios, seed)?;
    let mut split = vec![Split::Test; records.len()];
    train.iter().for_each(|&i| split[i] = Split::Train);
    val.iter().for_each(|&i| split[i] = Split::Val);
    records
        .iter()
        .enumerate()
        .map(|(i, &(ecg_ref, report))| {
            let prompt = sample_prompt(pool, rng::derive(seed, &[0x9E, i as u64]));
            render_template(prompt, report)?;
            Ok(InstructionSample {
                id: format!("S-{i:06}"),
                prompt_text: prompt.to_owned(),
                ecg_ref: ecg_ref.to_owned(),
                report_text: report.to_owned(),
                split: split[i],
            })
        })
        .collect()
}

pub fn write_instruction_jsonl(path: impl AsRef<Path>, rows: &[InstructionRecord]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for r in rows {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_instruction_jsonl(path: impl AsRef<Path>) -> Result<Vec<InstructionRecord>> {
    let mut out = Vec::new();
    for line in BufReader::new(fs::File::open(path)?).lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(prompt: &str, report: &str) -> InstructionSample {
        InstructionSample {
            id: "s0".into(),
            prompt_text: prompt.into(),
            ecg_ref: "A-000000".into(),
            report_text: report.into(),
            split: Split::Train,
        }
    }

    fn vocab() -> Vocabulary {
        Vocabulary::build(["Describe this ECG.", "sinus rhythm. heart rate 72 bpm. normal ecg."], 64).unwrap()
    }

    #[test]
    fn mask_covers_response_and_eos() {
        let v = vocab();
        let t = tokenize_example(&sample("Describe this ECG.", "sinus rhythm."), &v, 256).unwrap();
        let words = v.decode(&t.token_ids).unwrap();
        let masked: Vec<&str> = words.iter().zip(&t.loss_mask).filter(|(_, &m)| m).map(|(w, _)| *w).collect();
        assert_eq!(masked, ["sinus", "rhythm", ".", "</s>"]);
        assert_eq!(&words[t.response_start - 2..t.response_start], ["<|assistant|>", ":"]);
        assert!(t.loss_mask[..t.response_start].iter().all(|m| !m));
        assert_eq!(t.prompt_ids().len(), t.response_start);
    }

    #[test]
    fn truncates_response_not_prompt() {
        let v = vocab();
        let s = sample("Describe this ECG.", "sinus rhythm. heart rate 72 bpm. normal ecg.");
        let full = tokenize_example(&s, &v, 256).unwrap();
        let cut = tokenize_example(&s, &v, full.response_start + 3).unwrap();
        assert_eq!(cut.len(), full.response_start + 3);
        assert_eq!(cut.token_ids[..], full.token_ids[..cut.len()]);
        assert!(matches!(tokenize_example(&s, &v, full.response_start), Err(Error::ContextOverflow { .. })));
    }

    #[test]
    fn direct_sequence_layout() {
        let v = vocab();
        let t = direct_example("sinus rhythm.", "A-1", &v, 256).unwrap();
        assert_eq!(v.decode(&t.token_ids).unwrap(), ["<|assistant|>", ":", "sinus", "rhythm", ".", "</s>"]);
        assert_eq!(t.loss_mask, [false, true, true, true, true, true]);
    }

    #[test]
    fn split_sizes() {
        let (a, b, c) = split_dataset(21837, SplitRatios::new(0.7, 0.1, 0.2), 0).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (15285, 2183, 4369));
        let (a, b, c) = split_dataset(10, SplitRatios::new(0.8, 0.1, 0.1), 0).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (8, 1, 1));
        assert!(split_dataset(10, SplitRatios::new(0.8, 0.1, 0.2), 0).is_err());
        assert!(split_dataset(10, SplitRatios::new(1.1, -0.1, 0.0), 0).is_err());
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.jsonl");
        let rows = vec![InstructionRecord {
            id: "x".into(),
            prompt: "Describe this ECG.".into(),
            ecg_path: "ecg/A-000000.mecg".into(),
            report: "sinus rhythm.".into(),
            split: Split::Val,
        }];
        write_instruction_jsonl(&p, &rows).unwrap();
        assert!(std::fs::read_to_string(&p).unwrap().contains("\"split\":\"val\""));
        assert_eq!(read_instruction_jsonl(&p).unwrap(), rows);
    }
}
