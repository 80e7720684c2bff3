use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use meit_metrics::MetricReport;

use crate::error::{BenchError, Result};
use crate::harness::{BenchResult, Condition, Task};

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// Files [`emit_report`] writes for a task, relative to the report directory.
pub fn artifact_names(task: Task) -> Vec<String> {
    let t = task.name();
    let mut v = vec![format!("{t}.md"), format!("{t}.csv"), format!("{t}.json")];
    let charts: &[&str] = match task {
        Task::Noise => &["noise.svg", "noise_cider.svg"],
        Task::Zeroshot => &["zeroshot.svg", "zeroshot_loss.svg", "zeroshot_meteor.svg"],
        Task::Quality => &["quality_loss.svg", "quality_meteor.svg"],
        Task::Ablation => &["ablation_loss.svg", "ablation_meteor.svg"],
    };
    v.extend(charts.iter().map(|s| s.to_string()));
    v
}

/// Writes tables, charts and an index for every result into `dir`.
/// Output depends only on the results, so re-emitting is byte-identical.
pub fn emit_report(results: &[BenchResult], dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    if results.is_empty() {
        return Err(BenchError::Config("no results to report".into()));
    }
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut index = String::from("# Benchmark report\n");
    for r in results {
        let t = r.task.name();
        let md = markdown(r);
        index.push('\n');
        index.push_str(&md);
        let mut files = vec![
            (format!("{t}.md"), md),
            (format!("{t}.csv"), csv_table(r)?),
            (format!("{t}.json"), r.to_json() + "\n"),
        ];
        files.extend(charts(r));
        for (name, body) in files {
            let p = dir.join(name);
            fs::write(&p, body)?;
            written.push(p);
        }
    }
    let p = dir.join("report.md");
    fs::write(&p, index)?;
    written.push(p);
    Ok(written)
}

fn csv_header() -> Vec<String> {
    let mut h: Vec<String> = ["condition", "model", "noise_level", "zero_prefix", "records", "train_steps"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend(MetricReport::COLUMNS.iter().map(|s| s.to_string()));
    h.push("composite".into());
    h.push("keyword_accuracy".into());
    h
}

fn csv_table(r: &BenchResult) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(csv_header())?;
    for c in &r.conditions {
        let mut row = vec![
            c.label.clone(),
            c.model.name().to_owned(),
            c.noise_level.map(|l| l.to_string()).unwrap_or_default(),
            c.zero_prefix.to_string(),
            c.records.to_string(),
            c.train_steps.to_string(),
        ];
        row.extend(c.metrics.values().iter().map(|v| v.to_string()));
        row.push(c.composite.to_string());
        row.push(c.keyword_accuracy.to_string());
        w.write_record(row)?;
    }
    let bytes = w.into_inner().map_err(|e| BenchError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

/// One parsed row of a results table.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub condition: String,
    pub metrics: [f64; 9],
    pub composite: f64,
    pub keyword_accuracy: f64,
}

pub fn read_results_csv(path: impl AsRef<Path>) -> Result<Vec<CsvRow>> {
    let mut rd = csv::Reader::from_path(path)?;
    let header: Vec<String> = rd.headers()?.iter().map(str::to_owned).collect();
    if header != csv_header() {
        return Err(BenchError::Config(format!("unexpected results header {header:?}")));
    }
    let num = |s: &str| s.parse::<f64>().map_err(|e| BenchError::Config(format!("bad number {s:?}: {e}")));
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let mut metrics = [0.0; 9];
        for (i, m) in metrics.iter_mut().enumerate() {
            *m = num(&rec[6 + i])?;
        }
        out.push(CsvRow {
            condition: rec[0].to_owned(),
            metrics,
            composite: num(&rec[15])?,
            keyword_accuracy: num(&rec[16])?,
        });
    }
    Ok(out)
}

fn markdown(r: &BenchResult) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "## {}\n", r.task);
    let _ = writeln!(s, "seed {}, config `{}`\n", r.seed, &r.config_hash[..16.min(r.config_hash.len())]);
    let rows: Vec<(String, MetricReport)> = r.conditions.iter().map(|c| (c.label.clone(), c.metrics.clone())).collect();
    s.push_str(&MetricReport::markdown_table(&rows));
    s.push_str("\n| Condition | Composite | Keyword accuracy | Records | Train steps |\n|---|---|---|---|---|\n");
    for c in r.conditions.iter().chain(&r.baseline) {
        let _ = writeln!(
            s,
            "| {} | {:.3} | {:.3} | {} | {} |",
            c.label, c.composite, c.keyword_accuracy, c.records, c.train_steps
        );
    }
    if let Some(b) = &r.baseline {
        let _ = writeln!(s, "\nBaseline ({}): BLEU-4 {:.3}, METEOR {:.3}.", b.label, b.metrics.bleu4, b.metrics.meteor);
    }
    if r.task == Task::Noise {
        if let Some(c) = r.conditions.first() {
            let _ = writeln!(s, "\nNoise subset of {} records, sampling seed {}.", c.records, r.config.eval.noise_seed);
        }
    }
    if !r.samples.is_empty() {
        s.push_str("\n### Samples\n\n");
        for p in &r.samples {
            let _ = writeln!(s, "- `{}` ({})\n  - prompt: {}\n  - reference: {}\n  - generated: {}", p.id, p.ecg_ref, p.prompt, p.reference, p.generated);
        }
    }
    let charts: Vec<String> = artifact_names(r.task).into_iter().filter(|n| n.ends_with(".svg")).collect();
    if !charts.is_empty() {
        s.push_str("\n### Charts\n\n");
        for c in charts {
            let _ = writeln!(s, "- [{c}]({c})");
        }
    }
    s
}

fn charts(r: &BenchResult) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let labels = |cs: &[Condition]| cs.iter().map(|c| c.label.clone()).collect::<Vec<_>>();
    match r.task {
        Task::Noise => {
            let xs: Vec<String> = r.conditions.iter().map(|c| c.noise_level.unwrap_or(0.0).to_string()).collect();
            let pick = |f: fn(&MetricReport) -> f64| r.conditions.iter().map(|c| f(&c.metrics)).collect::<Vec<_>>();
            let series = vec![
                ("BLEU-4".to_owned(), pick(|m| m.bleu4)),
                ("METEOR".to_owned(), pick(|m| m.meteor)),
                ("ROUGE-L".to_owned(), pick(|m| m.rouge_l)),
            ];
            out.push(("noise.svg".into(), line_chart("Score vs noise level", "noise level", "score", &xs, &series)));
            let cider = vec![("CIDEr-D".to_owned(), pick(|m| m.cider_d))];
            out.push(("noise_cider.svg".into(), line_chart("CIDEr-D vs noise level", "noise level", "CIDEr-D", &xs, &cider)));
        }
        Task::Zeroshot => {
            let series = vec![("composite".to_owned(), r.conditions.iter().map(|c| c.composite).collect())];
            out.push((
                "zeroshot.svg".into(),
                line_chart("Domain B composite score", "condition", "composite", &labels(&r.conditions), &series),
            ));
        }
        Task::Quality | Task::Ablation => {}
    }
    if r.task != Task::Noise {
        let n = r.curves.iter().map(|c| c.epochs.len()).max().unwrap_or(0);
        let xs: Vec<String> = (1..=n).map(|e| e.to_string()).collect();
        let pad = |v: Vec<f64>| {
            let mut v = v;
            v.resize(n, f64::NAN);
            v
        };
        let mut loss = Vec::new();
        let mut meteor = Vec::new();
        for c in &r.curves {
            loss.push((format!("{} train", c.label), pad(c.epochs.iter().map(|e| e.train_loss).collect())));
            loss.push((format!("{} val", c.label), pad(c.epochs.iter().map(|e| e.val_loss.unwrap_or(f64::NAN)).collect())));
            meteor.push((c.label.clone(), pad(c.epochs.iter().map(|e| e.val_meteor.unwrap_or(f64::NAN)).collect())));
        }
        let t = r.task.name();
        out.push((format!("{t}_loss.svg"), line_chart("Training loss", "epoch", "loss", &xs, &loss)));
        out.push((format!("{t}_meteor.svg"), line_chart("Validation METEOR", "epoch", "METEOR", &xs, &meteor)));
    }
    out
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Self-contained SVG line chart over categorical x positions. Non-finite
/// values break the line.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, xs: &[String], series: &[(String, Vec<f64>)]) -> String {
    let (w, h) = (720.0, 420.0);
    let (left, right, top, bottom) = (70.0, 190.0, 40.0, 60.0);
    let (pw, ph) = (w - left - right, h - top - bottom);
    let finite = series.iter().flat_map(|(_, v)| v.iter().copied()).filter(|v| v.is_finite());
    let (lo, hi) = finite.fold((0.0f64, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let hi = if hi.is_finite() && hi > lo { hi + 0.05 * (hi - lo) } else { lo + 1.0 };
    let xpos = |i: usize| left + if xs.len() > 1 { pw * i as f64 / (xs.len() - 1) as f64 } else { pw / 2.0 };
    let ypos = |v: f64| top + ph * (1.0 - (v - lo) / (hi - lo));

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#, left + pw / 2.0, esc(title));
    let _ = writeln!(
        s,
        r#"<line x1="{left}" y1="{}" x2="{}" y2="{}" stroke="black"/><line x1="{left}" y1="{top}" x2="{left}" y2="{}" stroke="black"/>"#,
        top + ph,
        left + pw,
        top + ph,
        top + ph
    );
    for k in 0..=5 {
        let v = lo + (hi - lo) * k as f64 / 5.0;
        let y = ypos(v);
        let _ = writeln!(
            s,
            r##"<line x1="{left}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#dddddd"/><text x="{}" y="{:.2}" text-anchor="end">{v:.3}</text>"##,
            left + pw,
            left - 6.0,
            y + 4.0
        );
    }
    for (i, x) in xs.iter().enumerate() {
        let _ = writeln!(s, r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#, xpos(i), top + ph + 18.0, esc(x));
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, left + pw / 2.0, h - 14.0, esc(x_label));
    let _ = writeln!(
        s,
        r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#,
        top + ph / 2.0,
        top + ph / 2.0,
        esc(y_label)
    );
    for (j, (name, values)) in series.iter().enumerate() {
        let color = PALETTE[j % PALETTE.len()];
        let mut runs: Vec<Vec<(f64, f64)>> = vec![vec![]];
        for (i, &v) in values.iter().enumerate().take(xs.len()) {
            if v.is_finite() {
                runs.last_mut().unwrap().push((xpos(i), ypos(v)));
            } else if !runs.last().unwrap().is_empty() {
                runs.push(vec![]);
            }
        }
        for run in runs.iter().filter(|r| !r.is_empty()) {
            let pts: Vec<String> = run.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
            let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, pts.join(" "));
            for (x, y) in run {
                let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{color}"/>"#);
            }
        }
        let ly = top + 10.0 + 20.0 * j as f64;
        let lx = left + pw + 16.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            esc(name)
        );
    }
    s.push_str("</svg>\n");
    s
}
