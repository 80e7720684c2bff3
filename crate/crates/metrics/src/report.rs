use serde::{Deserialize, Serialize};

use crate::bertscore::BertScore;
use crate::{bleu_stats, cider_d, meteor, rouge_l, rouge_n, Result};

/// The nine corpus scores, plus BERTScore when an embedder was supplied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub bleu1: f64,
    pub bleu2: f64,
    pub bleu3: f64,
    pub bleu4: f64,
    pub meteor: f64,
    pub rouge1: f64,
    pub rouge2: f64,
    #[serde(rename = "rougeL")]
    pub rouge_l: f64,
    #[serde(rename = "ciderD")]
    pub cider_d: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bertscore: Option<BertScore>,
}

impl MetricReport {
    /// Column order used by every emitted table.
    pub const COLUMNS: [&'static str; 9] = [
        "BLEU-1", "BLEU-2", "BLEU-3", "BLEU-4", "METEOR", "ROUGE-L", "ROUGE-1", "ROUGE-2", "CIDEr-D",
    ];

    pub fn values(&self) -> [f64; 9] {
        [
            self.bleu1,
            self.bleu2,
            self.bleu3,
            self.bleu4,
            self.meteor,
            self.rouge_l,
            self.rouge1,
            self.rouge2,
            self.cider_d,
        ]
    }

    pub fn get(&self, column: &str) -> Option<f64> {
        Self::COLUMNS.iter().position(|c| *c == column).map(|i| self.values()[i])
    }

    /// Mean of BLEU-3, BLEU-4, METEOR and ROUGE-L.
    pub fn composite(&self) -> f64 {
        (self.bleu3 + self.bleu4 + self.meteor + self.rouge_l) / 4.0
    }

    /// Range contract: CIDEr-D in [0, 10], everything else in [0, 1].
    pub fn in_range(&self) -> bool {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        let mut ok = self.values()[..8].iter().all(|&v| unit(v)) && (0.0..=10.0).contains(&self.cider_d);
        if let Some(b) = self.bertscore {
            ok &= b.p.abs() <= 1.0 && b.r.abs() <= 1.0 && b.f1.abs() <= 1.0;
        }
        ok
    }

    /// Markdown table with one row per labelled report.
    pub fn markdown_table(rows: &[(String, MetricReport)]) -> String {
        let mut s = String::from("| Condition |");
        for c in Self::COLUMNS {
            s.push_str(&format!(" {c} |"));
        }
        s.push_str("\n|---|");
        s.push_str(&"---|".repeat(Self::COLUMNS.len()));
        s.push('\n');
        for (label, r) in rows {
            s.push_str(&format!("| {label} |"));
            for (i, v) in r.values().iter().enumerate() {
                if i == 8 {
                    s.push_str(&format!(" {v:.2} |"));
                } else {
                    s.push_str(&format!(" {v:.3} |"));
                }
            }
            s.push('\n');
        }
        s
    }
}

/// Full metric report (BERTScore left out; see [`crate::bertscore`]).
pub fn evaluate<S: AsRef<str>, R: AsRef<str>>(candidates: &[S], references: &[R]) -> Result<MetricReport> {
    let stats = bleu_stats(candidates, references, 4)?;
    Ok(MetricReport {
        bleu1: stats.score(1),
        bleu2: stats.score(2),
        bleu3: stats.score(3),
        bleu4: stats.score(4),
        meteor: meteor(candidates, references)?,
        rouge1: rouge_n(candidates, references, 1)?.f,
        rouge2: rouge_n(candidates, references, 2)?.f,
        rouge_l: rouge_l(candidates, references)?.f,
        cider_d: cider_d(candidates, references)?,
        bertscore: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_corpus() {
        let refs = [
            "sinus rhythm. heart rate 72 bpm. normal ecg.",
            "atrial fibrillation. heart rate 110 bpm. abnormal ecg.",
        ];
        let r = evaluate(&refs, &refs).unwrap();
        assert!(r.in_range());
        assert_eq!(r.bleu4, 1.0);
        assert_eq!(r.rouge_l, 1.0);
        assert!(r.meteor > 0.99);
        assert!(r.cider_d > 0.0);
    }

    #[test]
    fn markdown_has_header_and_rows() {
        let refs = ["a b c d", "e f g h"];
        let r = evaluate(&refs, &refs).unwrap();
        let md = MetricReport::markdown_table(&[("x".into(), r.clone()), ("y".into(), r)]);
        assert_eq!(md.lines().count(), 4);
        assert!(md.starts_with("| Condition | BLEU-1 |"));
    }

    #[test]
    fn json_uses_camel_keys() {
        let refs = ["a b c d", "e f g h"];
        let r = evaluate(&refs, &refs).unwrap();
        let j = serde_json::to_string(&r).unwrap();
        assert!(j.contains("\"rougeL\"") && j.contains("\"ciderD\"") && !j.contains("bertscore"));
    }
}
