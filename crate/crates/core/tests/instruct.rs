use meit_core::instruct::{
    build_samples, detokenize_text, render_template, split_dataset, tokenize_example, InstructionSample, PromptPool, Split,
    SplitRatios, Vocabulary,
};
use proptest::prelude::*;

const WORDS: [&str; 10] = ["sinus", "rhythm", "heart", "rate", "bpm", "normal", "ecg", "block", "st", "elevation"];

fn sentence() -> impl Strategy<Value = String> {
    prop::collection::vec((0usize..WORDS.len(), 0u8..6), 1..12).prop_map(|ws| {
        let mut s = String::new();
        for (i, (w, p)) in ws.iter().enumerate() {
            if i > 0 {
                s.push(' ');
            }
            s.push_str(WORDS[*w]);
            match p {
                0 => s.push('.'),
                1 => s.push(','),
                _ => {}
            }
        }
        s
    })
}

fn vocab() -> Vocabulary {
    let text = WORDS.join(" ") + " . ,";
    Vocabulary::build([text.as_str()], 64).unwrap()
}

proptest! {
    #[test]
    fn split_is_a_partition(n in 3usize..3000, alt in any::<bool>(), seed in any::<u64>()) {
        let ratios = if alt { SplitRatios::new(0.7, 0.1, 0.2) } else { SplitRatios::new(0.8, 0.1, 0.1) };
        let (a, b, c) = split_dataset(n, ratios, seed).unwrap();
        prop_assert_eq!(a.len(), (ratios.train * n as f64 + 1e-9).floor() as usize);
        prop_assert_eq!(b.len(), (ratios.val * n as f64 + 1e-9).floor() as usize);
        let mut all: Vec<usize> = a.iter().chain(&b).chain(&c).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn masks_start_at_the_response(prompt in sentence(), report in sentence(), max in 8usize..64) {
        let v = vocab();
        let s = InstructionSample {
            id: "x".into(),
            prompt_text: prompt,
            ecg_ref: "r".into(),
            report_text: report.clone(),
            split: Split::Train,
        };
        match tokenize_example(&s, &v, max) {
            Ok(ex) => {
                prop_assert!(ex.len() <= max);
                prop_assert_eq!(ex.loss_mask.len(), ex.len());
                prop_assert!(ex.loss_mask[..ex.response_start].iter().all(|&m| !m));
                prop_assert!(ex.loss_mask[ex.response_start..].iter().all(|&m| m));
                prop_assert_eq!(&ex.prompt_ids()[ex.response_start - 2..], &v.assistant_marker()[..]);
                let full = v.encode(&format!(" {report}</s>")).len();
                if ex.len() < max {
                    prop_assert_eq!(ex.loss_mask.iter().filter(|&&m| m).count(), full);
                }
            }
            Err(e) => prop_assert_eq!(e.kind(), "context_overflow"),
        }
    }

    #[test]
    fn detokenize_inverts_tokenize(prompt in sentence(), report in sentence()) {
        let v = vocab();
        let rendered = render_template(&prompt, &report).unwrap();
        let ids = v.encode(&rendered);
        prop_assert!(!ids.contains(&v.unk_id()));
        prop_assert_eq!(v.detokenize(&ids).unwrap(), rendered.to_lowercase());
        let words = meit_core::instruct::split_words(&report);
        prop_assert_eq!(detokenize_text(&words), report);
    }

    #[test]
    fn samples_keep_order_and_pool(n in 1usize..60, seed in any::<u64>()) {
        let ids: Vec<String> = (0..n).map(|i| format!("A-{i:06}")).collect();
        let pairs: Vec<(&str, &str)> = ids.iter().map(|s| (s.as_str(), "sinus rhythm.")).collect();
        let pool = PromptPool::v1();
        let s = build_samples(&pairs, &pool, SplitRatios::default(), seed).unwrap();
        prop_assert_eq!(s.len(), n);
        for (x, id) in s.iter().zip(&ids) {
            prop_assert_eq!(&x.ecg_ref, id);
            prop_assert!(pool.prompts().contains(&x.prompt_text));
        }
        prop_assert_eq!(s, build_samples(&pairs, &pool, SplitRatios::default(), seed).unwrap());
    }
}
