use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::io::read_record;
use super::record::{Domain, EcgRecord};
use super::synth::{generate_synthetic_record, report_text, RhythmClass, SyntheticLabel};
use crate::error::{arg, Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    pub size_a: usize,
    pub size_b: usize,
    pub duration_s: f64,
    pub sample_rate_hz: u32,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig { size_a: 5000, size_b: 5000, duration_s: 10.0, sample_rate_hz: 500 }
    }
}

/// A corpus entry that can produce its waveform on demand. A full 10 s,
/// 500 Hz record is 240 kB, so corpora are planned up front and records are
/// synthesized when needed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusItem {
    pub record_id: String,
    pub label: SyntheticLabel,
    pub seed: u64,
    pub report: String,
    pub duration_s: f64,
    pub sample_rate_hz: u32,
}

impl CorpusItem {
    pub fn generate(&self) -> Result<EcgRecord> {
        Ok(generate_synthetic_record(&self.label, self.duration_s, self.sample_rate_hz, self.seed)?
            .with_id(self.record_id.clone()))
    }
}

/// Resolves record ids to waveforms.
pub trait EcgSource: Sync {
    fn load(&self, record_id: &str) -> Result<EcgRecord>;
}

#[derive(Debug, Clone, Default)]
pub struct CorpusPlan {
    pub items: Vec<CorpusItem>,
    index: HashMap<String, usize>,
}

impl CorpusPlan {
    pub fn new(items: Vec<CorpusItem>) -> Self {
        let index = items.iter().enumerate().map(|(i, it)| (it.record_id.clone(), i)).collect();
        CorpusPlan { items, index }
    }

    pub fn get(&self, record_id: &str) -> Option<&CorpusItem> {
        self.index.get(record_id).map(|&i| &self.items[i])
    }

    pub fn domain(&self, domain: Domain) -> Vec<&CorpusItem> {
        self.items.iter().filter(|it| it.label.domain == domain).collect()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

impl EcgSource for CorpusPlan {
    fn load(&self, record_id: &str) -> Result<EcgRecord> {
        self.get(record_id).ok_or_else(|| Error::UnknownRecord(record_id.to_owned()))?.generate()
    }
}

fn plan_domain(domain: Domain, n: usize, config: &CorpusConfig, seed: u64) -> Vec<CorpusItem> {
    let tag = domain.tag() as u64;
    let classes = RhythmClass::ALL;
    let mut order: Vec<RhythmClass> = (0..n).map(|i| classes[i % classes.len()]).collect();
    order.shuffle(&mut rng::stream(seed, &[tag, 1]));
    let mut hr_rng = rng::stream(seed, &[tag, 2]);
    order
        .into_iter()
        .enumerate()
        .map(|(i, class)| {
            let grid = class.heart_rate_grid();
            let hr = grid[hr_rng.random_range(0..grid.len())];
            let label = SyntheticLabel { rhythm_class: class, heart_rate_bpm: hr, domain };
            CorpusItem {
                record_id: format!("{}-{i:06}", domain.as_str()),
                report: report_text(&label),
                label,
                seed: rng::derive(seed, &[tag, 3, i as u64]),
                duration_s: config.duration_s,
                sample_rate_hz: config.sample_rate_hz,
            }
        })
        .collect()
}

/// Plans a two-domain corpus with classes balanced within each domain.
pub fn plan_corpus(config: &CorpusConfig, seed: u64) -> Result<CorpusPlan> {
    if config.size_a + config.size_b == 0 {
        return arg("corpus must contain at least one record");
    }
    if !(config.duration_s.is_finite() && config.duration_s > 0.0) || config.sample_rate_hz == 0 {
        return arg("duration and sample rate must be positive");
    }
    let mut items = plan_domain(Domain::A, config.size_a, config, seed);
    items.extend(plan_domain(Domain::B, config.size_b, config, seed));
    Ok(CorpusPlan::new(items))
}

/// Materializes every record of the corpus.
pub fn build_corpus(config: &CorpusConfig, seed: u64) -> Result<Vec<(EcgRecord, String, SyntheticLabel)>> {
    let plan = plan_corpus(config, seed)?;
    plan.items
        .par_iter()
        .map(|it| Ok((it.generate()?, it.report.clone(), it.label)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub record_id: String,
    pub ecg_path: String,
    pub report: String,
    pub label: Option<SyntheticLabel>,
    pub domain: Domain,
}

pub fn write_manifest(path: impl AsRef<Path>, entries: &[ManifestEntry]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for e in entries {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let r = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

/// Loads binary records listed in a manifest; paths are relative to the
/// manifest's directory.
#[derive(Debug, Clone)]
pub struct ManifestSource {
    paths: HashMap<String, PathBuf>,
}

impl ManifestSource {
    pub fn open(manifest: impl AsRef<Path>) -> Result<Self> {
        let manifest = manifest.as_ref();
        let root = manifest.parent().unwrap_or(Path::new("."));
        let paths = read_manifest(manifest)?
            .into_iter()
            .map(|e| (e.record_id, root.join(e.ecg_path)))
            .collect();
        Ok(ManifestSource { paths })
    }
}

impl EcgSource for ManifestSource {
    fn load(&self, record_id: &str) -> Result<EcgRecord> {
        let p = self.paths.get(record_id).ok_or_else(|| Error::UnknownRecord(record_id.to_owned()))?;
        read_record(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> CorpusConfig {
        CorpusConfig { size_a: 40, size_b: 24, duration_s: 2.0, sample_rate_hz: 250 }
    }

    #[test]
    fn plan_is_deterministic_and_disjoint() {
        let a = plan_corpus(&small(), 1).unwrap();
        let b = plan_corpus(&small(), 1).unwrap();
        assert_eq!(a.items, b.items);
        assert_eq!(a.len(), 64);
        let ids: std::collections::HashSet<_> = a.items.iter().map(|i| &i.record_id).collect();
        assert_eq!(ids.len(), 64);
        assert_eq!(a.domain(Domain::A).len(), 40);
        assert!(a.domain(Domain::B).iter().all(|i| i.record_id.starts_with("B-")));
        assert_ne!(plan_corpus(&small(), 2).unwrap().items, a.items);
    }

    #[test]
    fn reports_follow_labels() {
        let p = plan_corpus(&small(), 3).unwrap();
        for it in &p.items {
            assert_eq!(it.report, report_text(&it.label));
            it.label.validate().unwrap();
        }
    }

    #[test]
    fn build_matches_plan() {
        let cfg = CorpusConfig { size_a: 3, size_b: 2, duration_s: 1.0, sample_rate_hz: 100 };
        let built = build_corpus(&cfg, 4).unwrap();
        let plan = plan_corpus(&cfg, 4).unwrap();
        for ((rec, report, label), it) in built.iter().zip(&plan.items) {
            assert_eq!(rec.record_id(), it.record_id);
            assert_eq!(report, &it.report);
            assert_eq!(label, &it.label);
            assert_eq!(rec, &plan.load(&it.record_id).unwrap());
        }
        assert!(matches!(plan.load("C-1"), Err(Error::UnknownRecord(_))));
    }

    #[test]
    fn empty_corpus_rejected() {
        let cfg = CorpusConfig { size_a: 0, size_b: 0, ..CorpusConfig::default() };
        assert!(plan_corpus(&cfg, 0).is_err());
    }
}
