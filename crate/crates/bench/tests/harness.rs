use meit_bench::{
    emit_report, read_results_csv, Bench, BenchConfig, BenchError, BenchResult, ModelKey, Task,
};
use meit_core::instruct::Split;
use meit_core::model::ModelConfig;
use meit_core::signal::{CorpusConfig, Domain};
use meit_metrics::MetricReport;
use std::collections::HashSet;
use std::sync::OnceLock;

fn small() -> BenchConfig {
    let mut c = BenchConfig::default();
    c.seed = 4;
    c.corpus = CorpusConfig { size_a: 80, size_b: 40, duration_s: 3.0, sample_rate_hz: 250 };
    c.model = ModelConfig { num_layers: 1, num_heads: 2, head_dim: 16, max_seq_len: 64, ..Default::default() };
    c.encoder.channels = vec![8, 16];
    c.train.epochs = 2;
    c.train.batch_size = 8;
    c.eval.noise_fraction = 1.0;
    c
}

fn results() -> &'static Vec<BenchResult> {
    static R: OnceLock<Vec<BenchResult>> = OnceLock::new();
    R.get_or_init(|| {
        let mut b = Bench::new(small()).unwrap();
        Task::ALL.iter().map(|&t| b.run(t).unwrap()).collect()
    })
}

fn result(task: Task) -> &'static BenchResult {
    results().iter().find(|r| r.task == task).unwrap()
}

#[test]
fn every_metric_is_in_range() {
    for r in results() {
        for c in r.conditions.iter().chain(&r.baseline) {
            assert!(c.metrics.in_range(), "{} / {}", r.task, c.label);
            assert!((0.0..=1.0).contains(&c.keyword_accuracy));
        }
    }
}

#[test]
fn task_contracts() {
    let labels = |t| result(t).conditions.iter().map(|c| c.label.as_str()).collect::<Vec<_>>();
    assert_eq!(labels(Task::Zeroshot), ["Zero-shot IT", "Zero-shot w/o IT", "Target IT"]);
    let noise = result(Task::Noise);
    let levels: Vec<f64> = noise.conditions.iter().map(|c| c.noise_level.unwrap()).collect();
    assert_eq!(levels, [0.0, 0.05, 0.1, 0.15, 0.2]);
    let quality = result(Task::Quality);
    assert_eq!(noise.conditions[0].metrics, quality.conditions[0].metrics);
    assert_eq!(quality.samples.len(), quality.config.eval.sample_dump.min(quality.conditions[0].records));

    let ab = result(Task::Ablation);
    assert_eq!(ab.conditions.len(), 2);
    assert_eq!(ab.conditions[0].train_steps, ab.conditions[1].train_steps);
    assert!(ab.conditions[0].train_steps > 0);
    assert_eq!(ab.baseline.as_ref().unwrap().train_steps, 0);
    let table = MetricReport::markdown_table(
        &ab.conditions.iter().map(|c| (c.label.clone(), c.metrics.clone())).collect::<Vec<_>>(),
    );
    let rows: Vec<&str> = table.lines().skip(2).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.matches('|').count() == 11));
}

#[test]
fn conditions_share_the_test_split() {
    for r in results() {
        let h: HashSet<&str> = r.conditions.iter().chain(&r.baseline).map(|c| c.eval_hash.as_str()).collect();
        assert_eq!(h.len(), 1, "{}", r.task);
    }
    assert_ne!(result(Task::Quality).conditions[0].eval_hash, result(Task::Zeroshot).conditions[0].eval_hash);
}

#[test]
fn comparability_is_enforced() {
    let mut r = result(Task::Quality).clone();
    r.conditions[1].eval_hash = "different".into();
    assert!(matches!(r.check_comparable(), Err(BenchError::Comparability(_))));
    assert!(result(Task::Quality).check_comparable().is_ok());
    let mut b = Bench::new(small()).unwrap();
    b.config.eval.test_limit = 3;
    let (a, _) = b.evaluate("x", ModelKey::Untrained, Domain::A, Default::default()).unwrap();
    b.config.eval.test_limit = 4;
    let (c, _) = b.evaluate("y", ModelKey::Untrained, Domain::A, Default::default()).unwrap();
    assert_ne!(a.eval_hash, c.eval_hash);
}

#[test]
fn splits_do_not_leak() {
    let b = Bench::new(small()).unwrap();
    for d in [Domain::A, Domain::B] {
        let train: HashSet<&str> = b.data.select(d, Split::Train).iter().map(|s| s.ecg_ref.as_str()).collect();
        for split in [Split::Val, Split::Test] {
            assert!(b.data.select(d, split).iter().all(|s| !train.contains(s.ecg_ref.as_str())));
        }
    }
    let ids: HashSet<&str> = b.data.samples.iter().map(|s| s.id.as_str()).collect();
    assert_eq!(ids.len(), b.data.samples.len());
}

#[test]
fn runs_are_reproducible() {
    let mut b = Bench::new(small()).unwrap();
    let again = b.run(Task::Quality).unwrap();
    assert_eq!(again.to_json(), result(Task::Quality).to_json());
    let mut other = small();
    other.seed = 5;
    let mut b = Bench::new(other).unwrap();
    assert_ne!(b.run(Task::Quality).unwrap().config_hash, again.config_hash);
}

#[test]
fn checkpoints_are_reused() {
    let dir = tempfile::tempdir().unwrap();
    let mut a = Bench::new(small()).unwrap().with_checkpoints(dir.path());
    let first = a.model(ModelKey::InstructA).unwrap().clone();
    let path = a.checkpoint_path(ModelKey::InstructA).unwrap();
    assert!(path.exists());
    let mut b = Bench::new(small()).unwrap().with_checkpoints(dir.path());
    assert_eq!(*b.model(ModelKey::InstructA).unwrap(), first);
}

#[test]
fn invalid_configs_are_rejected() {
    let mut c = small();
    c.eval.noise_levels = vec![0.1, 0.0];
    assert!(matches!(Bench::new(c), Err(BenchError::Config(_))));
    let mut c = small();
    c.data.split = meit_core::instruct::SplitRatios::new(0.5, 0.5, 0.5);
    assert!(Bench::new(c).is_err());
    let mut c = small();
    c.train.batch_size = 0;
    assert!(Bench::new(c).is_err());
}

#[test]
fn config_toml_round_trip() {
    let c = small();
    let back: BenchConfig = toml::from_str(&c.to_toml()).unwrap();
    assert_eq!(back, c);
    let partial: BenchConfig = toml::from_str("seed = 9\n[corpus]\nsize_a = 10\n").unwrap();
    assert_eq!(partial.seed, 9);
    assert_eq!(partial.corpus.size_a, 10);
    assert_eq!(partial.corpus.size_b, BenchConfig::default().corpus.size_b);
}

#[test]
fn report_files() {
    let dir = tempfile::tempdir().unwrap();
    let files = emit_report(results(), dir.path()).unwrap();
    for r in results() {
        for name in &r.artifacts {
            assert!(dir.path().join(name).exists(), "{name}");
        }
        let rows = read_results_csv(dir.path().join(format!("{}.csv", r.task))).unwrap();
        assert_eq!(rows.len(), r.conditions.len());
        for (row, c) in rows.iter().zip(&r.conditions) {
            assert_eq!(row.condition, c.label);
            assert_eq!(row.metrics, c.metrics.values());
            assert_eq!(row.composite, c.composite);
            assert_eq!(row.keyword_accuracy, c.keyword_accuracy);
        }
    }
    for f in files.iter().filter(|f| f.extension().is_some_and(|e| e == "svg")) {
        let text = std::fs::read_to_string(f).unwrap();
        let doc = roxmltree::Document::parse(&text).unwrap_or_else(|e| panic!("{f:?}: {e}"));
        assert_eq!(doc.root_element().tag_name().name(), "svg");
        assert!(doc.descendants().any(|n| n.has_tag_name("polyline")), "{f:?} has no lines");
    }
    let first: Vec<Vec<u8>> = files.iter().map(|f| std::fs::read(f).unwrap()).collect();
    let files2 = emit_report(results(), dir.path()).unwrap();
    assert_eq!(files, files2);
    let second: Vec<Vec<u8>> = files2.iter().map(|f| std::fs::read(f).unwrap()).collect();
    assert_eq!(first, second);
    assert!(emit_report(&[], dir.path()).is_err());
}
