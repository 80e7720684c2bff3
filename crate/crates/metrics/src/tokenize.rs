/// Lowercase and split on whitespace and punctuation.
///
/// Punctuation acts purely as a separator and never becomes a token, so
/// `"Sinus rhythm. Heart-rate 72"` yields `["sinus", "rhythm", "heart", "rate", "72"]`.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            cur.extend(ch.to_lowercase());
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_on_punctuation_and_lowercases() {
        assert_eq!(
            tokenize("Sinus rhythm. Heart-rate 72 bpm!"),
            vec!["sinus", "rhythm", "heart", "rate", "72", "bpm"]
        );
    }

    #[test]
    fn empty_and_punctuation_only() {
        assert!(tokenize("").is_empty());
        assert!(tokenize(" .,;  ").is_empty());
    }
}
