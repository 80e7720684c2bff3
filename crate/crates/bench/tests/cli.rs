use std::path::Path;
use std::process::{Command, Output};

use meit_core::instruct::{read_instruction_jsonl, Vocabulary};
use meit_core::signal::{read_manifest, read_record, ManifestSource, EcgSource};

const CONFIG: &str = r#"
seed = 2
[corpus]
size_a = 40
size_b = 24
duration_s = 3.0
sample_rate_hz = 250
[model]
num_layers = 1
num_heads = 2
head_dim = 16
max_seq_len = 64
[encoder]
channels = [8, 16]
[train]
epochs = 1
batch_size = 8
"#;

fn meit(dir: &Path, args: &[&str]) -> Output {
    let cfg = dir.join("config.toml");
    if !cfg.exists() {
        std::fs::write(&cfg, CONFIG).unwrap();
    }
    Command::new(env!("CARGO_BIN_EXE_meit"))
        .arg("--config")
        .arg(&cfg)
        .arg("--output-dir")
        .arg(dir.join("out"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout_json(o: &Output) -> serde_json::Value {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).unwrap()
}

fn stderr_json(o: &Output) -> serde_json::Value {
    assert!(!o.status.success());
    serde_json::from_slice(&o.stderr).unwrap_or_else(|_| panic!("stderr is not JSON: {}", String::from_utf8_lossy(&o.stderr)))
}

#[test]
fn forge_writes_dataset_vocab_and_signals() {
    let dir = tempfile::tempdir().unwrap();
    let v = stdout_json(&meit(dir.path(), &["forge", "--signals"]));
    assert_eq!(v["samples"], 64);
    let data = dir.path().join("out/data");
    let rows = read_instruction_jsonl(data.join("dataset.jsonl")).unwrap();
    assert_eq!(rows.len(), 64);
    let vocab = Vocabulary::load(data.join("vocab.txt")).unwrap();
    assert_eq!(vocab.hash(), v["vocab_hash"].as_str().unwrap());
    let manifest = read_manifest(data.join("manifest.jsonl")).unwrap();
    assert_eq!(manifest.len(), 64);
    let rec = read_record(data.join(&rows[0].ecg_path)).unwrap();
    assert_eq!(rec.num_samples(), 750);
    let src = ManifestSource::open(data.join("manifest.jsonl")).unwrap();
    assert_eq!(src.load(&manifest[3].record_id).unwrap().record_id(), manifest[3].record_id);
}

#[test]
fn train_generate_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let t = stdout_json(&meit(dir.path(), &["train"]));
    assert_eq!(t["model"], "instruct_a");
    let ckpt = t["checkpoint"].as_str().unwrap().to_owned();
    assert!(Path::new(&ckpt).exists());

    let gen_path = dir.path().join("gen.jsonl");
    let g = stdout_json(&meit(dir.path(), &["generate", "--checkpoint", &ckpt, "--out", gen_path.to_str().unwrap()]));
    assert!(g["records"].as_u64().unwrap() > 0);
    let lines = std::fs::read_to_string(&gen_path).unwrap();
    assert_eq!(lines.lines().count() as u64, g["records"].as_u64().unwrap());

    let e = stdout_json(&meit(dir.path(), &["evaluate", "--generations", gen_path.to_str().unwrap()]));
    let m = &e["metrics"];
    for k in ["bleu1", "bleu4", "meteor", "rougeL", "ciderD"] {
        assert!(m[k].as_f64().is_some(), "{k}");
    }
}

#[test]
fn bench_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let b = stdout_json(&meit(dir.path(), &["bench", "quality"]));
    assert_eq!(b["results"][0]["task"], "quality");
    let report = dir.path().join("out/report/quality.md");
    let first = std::fs::read(&report).unwrap();
    std::fs::remove_dir_all(dir.path().join("out/report")).unwrap();
    stdout_json(&meit(dir.path(), &["report"]));
    assert_eq!(std::fs::read(&report).unwrap(), first);
}

#[test]
fn seed_override_changes_the_data() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("out/data/dataset.jsonl");
    let a = stdout_json(&meit(dir.path(), &["forge"]));
    let first = std::fs::read(&data).unwrap();
    let b = stdout_json(&meit(dir.path(), &["--seed", "3", "forge"]));
    assert_eq!(a["samples"], b["samples"]);
    assert_ne!(std::fs::read(&data).unwrap(), first);
    let again = stdout_json(&meit(dir.path(), &["forge"]));
    assert_eq!(a, again);
    assert_eq!(std::fs::read(&data).unwrap(), first);
}

#[test]
fn errors_are_json_on_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let e = stderr_json(&meit(dir.path(), &["bench", "everything"]));
    assert_eq!(e["error"], "config");
    let e = stderr_json(&meit(dir.path(), &["frobnicate"]));
    assert_eq!(e["error"], "usage");
    let e = stderr_json(&meit(dir.path(), &["evaluate", "--generations", "/nonexistent/x.jsonl"]));
    assert_eq!(e["error"], "io");
    std::fs::write(dir.path().join("bad.toml"), "[model]\nnum_heads = \"two\"\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_meit")).args(["--config", dir.path().join("bad.toml").to_str().unwrap(), "forge"]).output().unwrap();
    assert_eq!(stderr_json(&o)["error"], "config");
    let o = Command::new(env!("CARGO_BIN_EXE_meit")).arg("--help").output().unwrap();
    assert!(o.status.success());
}
