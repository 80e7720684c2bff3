use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use meit_bench::{emit_report, parse_rhythm, Bench, BenchConfig, BenchError, BenchResult, EvalSpec, ModelKey, SamplePair, Task};
use meit_core::instruct::{write_instruction_jsonl, InstructionRecord};
use meit_core::signal::{write_manifest, write_record, Domain, EcgSource, ManifestEntry};
use meit_core::train::load_checkpoint;
use serde_json::json;

#[derive(Parser)]
#[command(name = "meit", version, about = "ECG instruction tuning at desk scale")]
struct Cli {
    /// TOML config; defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the instruction dataset, vocabulary and corpus manifest.
    Forge {
        /// Also write every waveform as a binary record.
        #[arg(long)]
        signals: bool,
    },
    /// Train one condition and save its checkpoint.
    Train {
        #[arg(long, default_value = "instruct_a")]
        model: ModelKey,
    },
    /// Generate reports for a domain's test split.
    Generate {
        #[arg(long, default_value = "instruct_a")]
        model: ModelKey,
        /// Use this checkpoint instead of training or the cache.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value = "a")]
        domain: String,
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        zero_prefix: bool,
        /// Output JSONL (default: <output_dir>/generations.jsonl).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a generations file against its references.
    Evaluate {
        #[arg(long)]
        generations: PathBuf,
    },
    /// Run benchmark tasks and write their results and report.
    Bench {
        /// quality, zeroshot, noise, ablation or all.
        task: String,
    },
    /// Rebuild the report from saved results.
    Report {
        /// Directory holding <task>.json results (default: <output_dir>/results).
        #[arg(long)]
        results: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", &e.to_string().trim().to_owned(), 2),
    };
    match run(cli) {
        Ok(out) => {
            println!("{}", serde_json::to_string_pretty(&out).expect("json"));
            ExitCode::SUCCESS
        }
        Err(e) => fail(e.kind(), &e.to_string(), 1),
    }
}

fn fail(kind: &str, message: &str, code: u8) -> ExitCode {
    let err = json!({ "error": kind, "message": message });
    let _ = writeln!(std::io::stderr(), "{err}");
    ExitCode::from(code)
}

fn load_config(cli: &Cli) -> Result<BenchConfig, BenchError> {
    let mut cfg = match &cli.config {
        Some(p) => BenchConfig::load(p)?,
        None => BenchConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(d) = &cli.output_dir {
        cfg.output_dir = d.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn parse_domain(s: &str) -> Result<Domain, BenchError> {
    match s {
        "a" | "A" => Ok(Domain::A),
        "b" | "B" => Ok(Domain::B),
        _ => Err(BenchError::Config(format!("unknown domain {s:?}; expected a or b"))),
    }
}

fn run(cli: Cli) -> Result<serde_json::Value, BenchError> {
    let cfg = load_config(&cli)?;
    let out = cfg.output_dir.clone();
    match cli.command {
        Command::Forge { signals } => forge(cfg, &out, signals),
        Command::Train { model } => {
            let mut bench = Bench::new(cfg)?.with_checkpoints(out.join("checkpoints"));
            let path = bench.checkpoint_path(model);
            let t = bench.model(model)?;
            Ok(json!({
                "model": model.name(),
                "steps": t.state.step,
                "final_train_loss": t.log.epochs.last().map(|e| e.train_loss),
                "checkpoint": path,
            }))
        }
        Command::Generate { model, checkpoint, domain, noise, zero_prefix, out: dest } => {
            let domain = parse_domain(&domain)?;
            let mut bench = Bench::new(cfg)?.with_checkpoints(out.join("checkpoints"));
            if let Some(p) = checkpoint {
                let ck = load_checkpoint(&p, Some(&bench.data.vocab.hash()))?;
                bench.insert_model(model, meit_bench::Trained { state: ck.state, log: Default::default() });
            }
            let spec = EvalSpec { zero_prefix, noise_level: noise, noise_subset: false };
            let (cond, pairs) = bench.evaluate(model.name(), model, domain, spec)?;
            let dest = dest.unwrap_or_else(|| out.join("generations.jsonl"));
            if let Some(d) = dest.parent() {
                fs::create_dir_all(d)?;
            }
            let mut body = String::new();
            for p in &pairs {
                body.push_str(&serde_json::to_string(p)?);
                body.push('\n');
            }
            fs::write(&dest, body)?;
            Ok(json!({ "generations": dest, "records": pairs.len(), "eval_hash": cond.eval_hash }))
        }
        Command::Evaluate { generations } => {
            let text = fs::read_to_string(&generations)?;
            let pairs: Vec<SamplePair> =
                text.lines().filter(|l| !l.trim().is_empty()).map(serde_json::from_str).collect::<Result<_, _>>()?;
            let hyps: Vec<&str> = pairs.iter().map(|p| p.generated.as_str()).collect();
            let refs: Vec<&str> = pairs.iter().map(|p| p.reference.as_str()).collect();
            let metrics = meit_metrics::evaluate(&hyps, &refs)?;
            let labelled: Vec<_> = pairs.iter().filter_map(|p| parse_rhythm(&p.reference).map(|c| (p, c))).collect();
            let hits = labelled.iter().filter(|(p, c)| parse_rhythm(&p.generated) == Some(*c)).count();
            let acc = if labelled.is_empty() { None } else { Some(hits as f64 / labelled.len() as f64) };
            Ok(json!({ "records": pairs.len(), "composite": metrics.composite(), "metrics": metrics, "keyword_accuracy": acc }))
        }
        Command::Bench { task } => {
            let tasks = if task == "all" { Task::ALL.to_vec() } else { vec![task.parse::<Task>()?] };
            let mut bench = Bench::new(cfg)?.with_checkpoints(out.join("checkpoints"));
            let results_dir = out.join("results");
            fs::create_dir_all(&results_dir)?;
            let mut results = Vec::new();
            for t in tasks {
                let r = bench.run(t)?;
                fs::write(results_dir.join(format!("{t}.json")), r.to_json() + "\n")?;
                results.push(r);
            }
            let files = emit_report(&results, out.join("report"))?;
            Ok(json!({
                "results": results.iter().map(summary).collect::<Vec<_>>(),
                "files": files,
            }))
        }
        Command::Report { results } => {
            let dir = results.unwrap_or_else(|| out.join("results"));
            let mut loaded = Vec::new();
            for t in Task::ALL {
                let p = dir.join(format!("{t}.json"));
                if p.exists() {
                    let r: BenchResult = serde_json::from_str(&fs::read_to_string(&p)?)?;
                    loaded.push(r);
                }
            }
            let files = emit_report(&loaded, out.join("report"))?;
            Ok(json!({ "files": files }))
        }
    }
}

fn summary(r: &BenchResult) -> serde_json::Value {
    json!({
        "task": r.task,
        "conditions": r.conditions.iter().map(|c| json!({
            "label": c.label,
            "composite": c.composite,
            "bleu4": c.metrics.bleu4,
            "meteor": c.metrics.meteor,
            "keyword_accuracy": c.keyword_accuracy,
        })).collect::<Vec<_>>(),
    })
}

fn forge(cfg: BenchConfig, out: &Path, signals: bool) -> Result<serde_json::Value, BenchError> {
    let bench = Bench::new(cfg)?;
    let data = &bench.data;
    let dir = out.join("data");
    fs::create_dir_all(&dir)?;
    let ecg_path = |id: &str| format!("ecg/{id}.mecg");
    let rows: Vec<InstructionRecord> = data
        .samples
        .iter()
        .map(|s| InstructionRecord {
            id: s.id.clone(),
            prompt: s.prompt_text.clone(),
            ecg_path: ecg_path(&s.ecg_ref),
            report: s.report_text.clone(),
            split: s.split,
        })
        .collect();
    write_instruction_jsonl(dir.join("dataset.jsonl"), &rows)?;
    data.vocab.save(dir.join("vocab.txt"))?;
    let entries: Vec<ManifestEntry> = data
        .plan
        .items
        .iter()
        .map(|it| ManifestEntry {
            record_id: it.record_id.clone(),
            ecg_path: ecg_path(&it.record_id),
            report: it.report.clone(),
            label: Some(it.label),
            domain: it.label.domain,
        })
        .collect();
    write_manifest(dir.join("manifest.jsonl"), &entries)?;
    if signals {
        fs::create_dir_all(dir.join("ecg"))?;
        for it in &data.plan.items {
            write_record(&data.plan.load(&it.record_id)?, dir.join(ecg_path(&it.record_id)))?;
        }
    }
    Ok(json!({
        "dir": dir,
        "samples": rows.len(),
        "vocab_size": data.vocab.len(),
        "vocab_hash": data.vocab.hash(),
        "signals": signals,
    }))
}
