use crate::error::{arg, Result};

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const USER: &str = "<|user|>";
pub const ASSISTANT: &str = "<|assistant|>";
pub const EOS: &str = "</s>";

/// Special tokens in id order.
pub const SPECIALS: [&str; 5] = [PAD, UNK, USER, ASSISTANT, EOS];

fn check_text(what: &str, s: &str) -> Result<()> {
    if s.trim().is_empty() {
        return arg(format!("{what} is empty"));
    }
    if let Some(m) = SPECIALS.iter().find(|m| s.contains(*m)) {
        return arg(format!("{what} contains the reserved marker {m}"));
    }
    Ok(())
}

/// `<|user|>: {prompt} <|assistant|>: {report}</s>`
pub fn render_template(prompt: &str, report: &str) -> Result<String> {
    check_text("prompt", prompt)?;
    check_text("report", report)?;
    Ok(format!("{USER}: {prompt} {ASSISTANT}: {report}{EOS}"))
}
