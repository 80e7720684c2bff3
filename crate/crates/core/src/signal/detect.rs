//! R-peak detection and the rule classifier that reads a synthetic label
//! back out of a waveform with the generator's own thresholds.

use serde::{Deserialize, Serialize};

use super::record::EcgRecord;
use super::synth::{DomainShift, RhythmClass};

const LEAD_II: usize = 1;
const LEAD_V1: usize = 6;
const LEAD_V2: usize = 7;

/// Indices of R peaks in `x` sampled at `fs` samples per (true) second.
///
/// Baseline is removed with a 0.6 s centred moving average; peaks are local
/// maxima above half the global maximum, at least 0.2 s apart.
pub fn detect_r_peaks(x: &[f64], fs: f64) -> Vec<usize> {
    let n = x.len();
    if n < 3 {
        return Vec::new();
    }
    let half = ((0.3 * fs).round() as usize).max(1);
    let mut prefix = vec![0.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + x[i];
    }
    let d: Vec<f64> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            x[i] - (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect();
    let max = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max <= 0.0 {
        return Vec::new();
    }
    let thr = 0.5 * max;
    let refractory = (0.2 * fs).round() as usize;
    let mut peaks: Vec<usize> = Vec::new();
    for i in 1..n - 1 {
        if d[i] <= thr || d[i] < d[i - 1] || d[i] <= d[i + 1] {
            continue;
        }
        match peaks.last_mut() {
            Some(last) if i - *last < refractory => {
                if d[i] > d[*last] {
                    *last = i;
                }
            }
            _ => peaks.push(i),
        }
    }
    peaks
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RrStats {
    pub mean_s: f64,
    pub cv: f64,
    pub heart_rate_bpm: f64,
}

pub fn rr_stats(peaks: &[usize], fs: f64) -> Option<RrStats> {
    if peaks.len() < 3 {
        return None;
    }
    let rr: Vec<f64> = peaks.windows(2).map(|w| (w[1] - w[0]) as f64 / fs).collect();
    let n = rr.len() as f64;
    let mean = rr.iter().sum::<f64>() / n;
    let var = rr.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    Some(RrStats { mean_s: mean, cv: var.sqrt() / mean, heart_rate_bpm: 60.0 / mean })
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

/// Recovers the rhythm class of a synthetic record.
///
/// Timing thresholds are applied in true seconds, using the clock of the
/// record's domain.
pub fn classify(record: &EcgRecord) -> RhythmClass {
    let clock = DomainShift::for_domain(record.domain()).clock;
    let fs = record.sample_rate_hz() as f64 / clock;
    let x = record.to_f64();
    let ii: Vec<f64> = x.row(LEAD_II).to_vec();
    let peaks = detect_r_peaks(&ii, fs);
    let Some(stats) = rr_stats(&peaks, fs) else {
        return RhythmClass::NormalEcg;
    };
    if stats.cv > 0.15 {
        return RhythmClass::AtrialFibrillation;
    }

    let n = ii.len();
    let off = |s: f64| (s * fs).round() as usize;
    let (o60, o90, t0) = (off(0.06), off(0.09), off(0.12));
    let t1 = off(0.7 * stats.mean_s);
    let inner: Vec<usize> = peaks.iter().copied().filter(|&p| p >= o60 && p + t1 < n).collect();

    let v1 = median(inner.iter().map(|&p| x[[LEAD_V1, p + o60]] - x[[LEAD_V1, p - o60]]).collect());
    if v1 > 0.2 {
        return RhythmClass::RightBundleBranchBlock;
    }
    if v1 < -0.3 {
        return RhythmClass::LeftBundleBranchBlock;
    }
    let v2 = median(inner.iter().map(|&p| x[[LEAD_V2, p + o90]] - x[[LEAD_V2, p - o60]]).collect());
    if v2 > 0.1 {
        return RhythmClass::StElevation;
    }
    if stats.heart_rate_bpm < 60.0 {
        return RhythmClass::SinusBradycardia;
    }
    if stats.heart_rate_bpm > 100.0 {
        return RhythmClass::SinusTachycardia;
    }
    let ratio = median(
        inner
            .iter()
            .map(|&p| {
                let base = ii[p - o60];
                let t = ii[p + t0..=p + t1].iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (t - base) / (ii[p] - base)
            })
            .collect(),
    );
    if ratio < 0.18 {
        RhythmClass::SinusRhythm
    } else {
        RhythmClass::NormalEcg
    }
}
