//! Instruction data: prompt pool, chat template, word-level vocabulary,
//! loss masks and dataset splits.

mod dataset;
mod prompts;
mod template;
mod vocab;

pub use dataset::{
    build_samples, direct_example, read_instruction_jsonl, split_dataset, tokenize_example, write_instruction_jsonl,
    InstructionRecord, InstructionSample, Split, SplitRatios, TokenizedExample,
};
pub use prompts::{sample_prompt, PromptPool};
pub use template::{render_template, ASSISTANT, EOS, PAD, SPECIALS, UNK, USER};
pub use vocab::{detokenize_text, split_words, Vocabulary};
