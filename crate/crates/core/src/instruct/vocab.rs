use std::collections::HashMap;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::template::{EOS, SPECIALS};
use crate::error::{arg, Error, Result};

/// Tokens of the template itself; always kept right after the specials.
const SCAFFOLD: [&str; 1] = [":"];

/// Splits text into word-level tokens.
///
/// Special markers are matched verbatim; everything else is lowercased,
/// alphanumeric runs become tokens, every other non-space character is a
/// token of its own, and whitespace is dropped.
pub fn split_words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = text;
    while !rest.is_empty() {
        let next = SPECIALS.iter().filter_map(|m| rest.find(m).map(|i| (i, *m))).min_by_key(|&(i, _)| i);
        let (plain, special) = match next {
            Some((i, m)) => (&rest[..i], Some(m)),
            None => (rest, None),
        };
        let mut word = String::new();
        for ch in plain.chars() {
            if ch.is_alphanumeric() {
                word.extend(ch.to_lowercase());
                continue;
            }
            if !word.is_empty() {
                out.push(std::mem::take(&mut word));
            }
            if !ch.is_whitespace() {
                out.push(ch.to_lowercase().collect());
            }
        }
        if !word.is_empty() {
            out.push(word);
        }
        match special {
            Some(m) => {
                out.push(m.to_owned());
                rest = &rest[plain.len() + m.len()..];
            }
            None => break,
        }
    }
    out
}

fn is_punct(tok: &str) -> bool {
    let mut cs = tok.chars();
    matches!((cs.next(), cs.next()), (Some(c), None) if !c.is_alphanumeric())
}

/// Joins tokens with single spaces, except before punctuation and `</s>`.
pub fn detokenize_text<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut s = String::new();
    for (i, t) in tokens.iter().enumerate() {
        let t = t.as_ref();
        if i > 0 && !is_punct(t) && t != EOS {
            s.push(' ');
        }
        s.push_str(t);
    }
    s
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        for (i, s) in SPECIALS.iter().enumerate() {
            if tokens.get(i).map(String::as_str) != Some(*s) {
                return Err(Error::Header(format!("vocabulary id {i} must be {s}")));
            }
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(Error::Header(format!("invalid token {t:?} at id {i}")));
            }
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::Header(format!("duplicate token {t:?}")));
            }
        }
        Ok(Vocabulary { tokens, index })
    }

    /// Frequency-sorted word vocabulary (ties broken lexicographically),
    /// capped at `max_size` entries including the five specials.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>, max_size: usize) -> Result<Self> {
        if max_size < SPECIALS.len() + SCAFFOLD.len() {
            return arg(format!("vocabulary size {max_size} leaves no room for specials"));
        }
        let mut counts: HashMap<String, usize> = HashMap::new();
        let mut any = false;
        for text in texts {
            any = true;
            for w in split_words(text) {
                if !SPECIALS.contains(&w.as_str()) && !SCAFFOLD.contains(&w.as_str()) {
                    *counts.entry(w).or_insert(0) += 1;
                }
            }
        }
        if !any {
            return arg("cannot build a vocabulary from an empty corpus");
        }
        let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let mut tokens: Vec<String> = SPECIALS.iter().chain(&SCAFFOLD).map(|s| s.to_string()).collect();
        tokens.extend(ranked.into_iter().map(|(w, _)| w).take(max_size - tokens.len()));
        Self::from_tokens(tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn pad_id(&self) -> u32 {
        0
    }
    pub fn unk_id(&self) -> u32 {
        1
    }
    pub fn user_id(&self) -> u32 {
        2
    }
    pub fn assistant_id(&self) -> u32 {
        3
    }
    pub fn eos_id(&self) -> u32 {
        4
    }

    /// Token ids that end every prompt: the assistant marker and its colon.
    pub fn assistant_marker(&self) -> Vec<u32> {
        vec![self.assistant_id(), self.index[":"]]
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        split_words(text).iter().map(|w| self.id(w).unwrap_or(self.unk_id())).collect()
    }

    pub fn decode(&self, ids: &[u32]) -> Result<Vec<&str>> {
        ids.iter()
            .map(|&i| self.token(i).ok_or(Error::TokenRange { id: i, vocab: self.len() }))
            .collect()
    }

    pub fn detokenize(&self, ids: &[u32]) -> Result<String> {
        Ok(detokenize_text(&self.decode(ids)?))
    }

    /// Hex SHA-256 of the token list, used to pair checkpoints with their
    /// vocabulary.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.tokens {
            h.update(t.as_bytes());
            h.update(b"\n");
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut s = self.tokens.join("\n");
        s.push('\n');
        fs::write(path, s)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_tokens(text.lines().map(str::to_owned).collect())
    }
}
