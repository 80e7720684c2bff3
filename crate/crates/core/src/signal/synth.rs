use std::f64::consts::PI;

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::record::{Domain, EcgRecord, NUM_LEADS};
use crate::error::{arg, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RhythmClass {
    SinusRhythm,
    SinusBradycardia,
    SinusTachycardia,
    AtrialFibrillation,
    RightBundleBranchBlock,
    LeftBundleBranchBlock,
    StElevation,
    NormalEcg,
}

impl RhythmClass {
    pub const ALL: [RhythmClass; 8] = [
        RhythmClass::SinusRhythm,
        RhythmClass::SinusBradycardia,
        RhythmClass::SinusTachycardia,
        RhythmClass::AtrialFibrillation,
        RhythmClass::RightBundleBranchBlock,
        RhythmClass::LeftBundleBranchBlock,
        RhythmClass::StElevation,
        RhythmClass::NormalEcg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RhythmClass::SinusRhythm => "sinus_rhythm",
            RhythmClass::SinusBradycardia => "sinus_bradycardia",
            RhythmClass::SinusTachycardia => "sinus_tachycardia",
            RhythmClass::AtrialFibrillation => "atrial_fibrillation",
            RhythmClass::RightBundleBranchBlock => "right_bundle_branch_block",
            RhythmClass::LeftBundleBranchBlock => "left_bundle_branch_block",
            RhythmClass::StElevation => "st_elevation",
            RhythmClass::NormalEcg => "normal_ecg",
        }
    }

    pub fn from_name(name: &str) -> Option<RhythmClass> {
        RhythmClass::ALL.into_iter().find(|c| c.name() == name)
    }

    /// Heart rates the corpus draws from for this class. Rates are quantized
    /// so the number in a report is recoverable from the waveform.
    pub fn heart_rate_grid(self) -> &'static [u32] {
        match self {
            RhythmClass::SinusBradycardia => &[40, 50],
            RhythmClass::SinusTachycardia => &[110, 130, 150],
            RhythmClass::AtrialFibrillation => &[70, 90, 110],
            _ => &[65, 80, 95],
        }
    }

    /// Phrase sequence of the report, with `{}` standing for the heart rate.
    fn report_template(self) -> &'static str {
        match self {
            RhythmClass::NormalEcg => "normal sinus rhythm. heart rate {} bpm. normal ecg.",
            RhythmClass::SinusRhythm => "sinus rhythm. heart rate {} bpm. normal ecg.",
            RhythmClass::SinusBradycardia => "sinus bradycardia. heart rate {} bpm. otherwise normal ecg.",
            RhythmClass::SinusTachycardia => "sinus tachycardia. heart rate {} bpm. otherwise normal ecg.",
            RhythmClass::AtrialFibrillation => "atrial fibrillation. heart rate {} bpm. abnormal ecg.",
            RhythmClass::RightBundleBranchBlock => {
                "sinus rhythm. heart rate {} bpm. right bundle branch block. abnormal ecg."
            }
            RhythmClass::LeftBundleBranchBlock => {
                "sinus rhythm. heart rate {} bpm. left bundle branch block. abnormal ecg."
            }
            RhythmClass::StElevation => "sinus rhythm. heart rate {} bpm. st elevation. abnormal ecg.",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SyntheticLabel {
    pub rhythm_class: RhythmClass,
    pub heart_rate_bpm: u32,
    pub domain: Domain,
}

impl SyntheticLabel {
    pub fn new(rhythm_class: RhythmClass, heart_rate_bpm: u32, domain: Domain) -> Result<Self> {
        let l = SyntheticLabel { rhythm_class, heart_rate_bpm, domain };
        l.validate()?;
        Ok(l)
    }

    pub fn validate(&self) -> Result<()> {
        if !(30..=200).contains(&self.heart_rate_bpm) {
            return arg(format!("heart rate {} outside [30, 200]", self.heart_rate_bpm));
        }
        if self.domain == Domain::External {
            return arg("synthetic labels belong to domain A or B");
        }
        let hr = self.heart_rate_bpm;
        let ok = match self.rhythm_class {
            RhythmClass::SinusBradycardia => hr < 60,
            RhythmClass::SinusTachycardia => hr > 100,
            RhythmClass::AtrialFibrillation => true,
            _ => (60..=100).contains(&hr),
        };
        if !ok {
            return arg(format!("heart rate {hr} inconsistent with {}", self.rhythm_class.name()));
        }
        Ok(())
    }
}

/// The deterministic report for a label.
pub fn report_text(label: &SyntheticLabel) -> String {
    label.rhythm_class.report_template().replace("{}", &label.heart_rate_bpm.to_string())
}

/// Acquisition differences between domains.
///
/// `clock` is the ratio of true elapsed time to nominal sample time: a
/// device with clock 1.2 stamps 500 Hz but actually samples at 500/1.2 Hz,
/// so beats look 20% faster in sample units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainShift {
    pub amplitude: f64,
    pub wander_mv: f64,
    pub wander_hz: f64,
    pub clock: f64,
    pub jitter_s: f64,
}

impl DomainShift {
    pub fn identity() -> Self {
        DomainShift { amplitude: 1.0, wander_mv: 0.0, wander_hz: 0.0, clock: 1.0, jitter_s: 0.0 }
    }

    pub fn domain_b() -> Self {
        DomainShift { amplitude: 0.8, wander_mv: 0.15, wander_hz: 0.25, clock: 1.2, jitter_s: 0.0005 }
    }

    pub fn for_domain(domain: Domain) -> Self {
        match domain {
            Domain::B => Self::domain_b(),
            _ => Self::identity(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Wave {
    centre: f64,
    sigma: f64,
    amp: f64,
}

// Basis leads I, II, V1..V6; the other four limb leads follow from I and II.
const BASIS: usize = 8;
const P: usize = 0;
const Q: usize = 1;
const R: usize = 2;
const S: usize = 3;
const T: usize = 4;
const V1: usize = 2;
const V2: usize = 3;
const V5: usize = 6;
const V6: usize = 7;

const NOMINAL_GAINS: [[f64; 5]; BASIS] = [
    [0.5, 0.5, 0.6, 0.4, 0.5],
    [1.0, 0.8, 1.0, 0.6, 1.0],
    [0.5, 0.0, 0.2, 1.6, 0.3],
    [0.6, 0.1, 0.4, 1.8, 0.8],
    [0.7, 0.3, 0.8, 1.2, 1.0],
    [0.8, 0.6, 1.2, 0.8, 1.0],
    [0.8, 0.9, 1.3, 0.4, 0.9],
    [0.7, 1.0, 1.0, 0.2, 0.7],
];

const FWAVE_GAINS: [f64; BASIS] = [0.5, 1.0, 1.0, 0.8, 0.6, 0.4, 0.3, 0.2];
const MEASUREMENT_NOISE_MV: f64 = 0.01;

struct Morphology {
    waves: [Wave; 5],
    gains: [[f64; 5]; BASIS],
}

fn morphology(class: RhythmClass, rr: f64) -> Morphology {
    let mut waves = [
        Wave { centre: -0.16, sigma: 0.025, amp: 0.15 },
        Wave { centre: -0.025, sigma: 0.010, amp: -0.10 },
        Wave { centre: 0.0, sigma: 0.010, amp: 1.0 },
        Wave { centre: 0.025, sigma: 0.010, amp: -0.25 },
        Wave { centre: 0.30 * rr.sqrt(), sigma: 0.05, amp: 0.30 },
    ];
    let mut gains = NOMINAL_GAINS;
    match class {
        RhythmClass::SinusRhythm => waves[T].amp = 0.08,
        RhythmClass::AtrialFibrillation => waves[P].amp = 0.0,
        RhythmClass::RightBundleBranchBlock => {
            waves[S] = Wave { centre: 0.07, sigma: 0.03, amp: -0.4 };
            gains[V1][S] = -1.5;
            gains[V2][S] = -0.8;
            gains[0][S] = 1.0;
            gains[V6][S] = 1.0;
        }
        RhythmClass::LeftBundleBranchBlock => {
            waves[Q].amp = 0.0;
            waves[R] = Wave { centre: 0.02, sigma: 0.03, amp: 1.0 };
            waves[S] = Wave { centre: 0.06, sigma: 0.03, amp: -0.8 };
            gains[V1][R] = 0.1;
            gains[V1][S] = 1.5;
            for v in [V5, V6] {
                gains[v][R] = 1.3;
                gains[v][S] = 0.0;
            }
            gains[0][T] = -0.5;
            gains[V5][T] = -0.9;
            gains[V6][T] = -0.7;
        }
        RhythmClass::StElevation => {
            waves[T] = Wave { centre: 0.20, sigma: 0.08, amp: 0.35 };
            for (k, g) in [1.2, 2.0, 2.0, 1.5].into_iter().enumerate() {
                gains[V1 + k][T] = g;
            }
        }
        _ => {}
    }
    Morphology { waves, gains }
}

fn coefficient_of_variation(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    var.sqrt() / mean
}

/// Beat times in true seconds covering [start, end].
fn beat_schedule<G: Rng>(class: RhythmClass, rr: f64, start: f64, end: f64, rng: &mut G) -> Vec<f64> {
    let af = class == RhythmClass::AtrialFibrillation;
    for _ in 0..100 {
        let mut beats = Vec::new();
        let mut t = start - rng.random::<f64>() * rr;
        while t < end {
            beats.push(t);
            t += if af {
                rr * (0.6 + 0.8 * rng.random::<f64>())
            } else {
                let z: f64 = StandardNormal.sample(rng);
                rr * (1.0 + (0.01 * z).clamp(-0.03, 0.03))
            };
        }
        beats.push(t);
        if !af {
            return beats;
        }
        let intervals: Vec<f64> = beats.windows(2).map(|w| w[1] - w[0]).collect();
        if coefficient_of_variation(&intervals) > 0.18 {
            return beats;
        }
    }
    unreachable!("atrial fibrillation schedule rejected 100 times")
}

/// Synthesizes a 12-lead record whose morphology encodes `label`.
///
/// Each beat is a sum of five Gaussian bumps (P, Q, R, S, T) with per-lead
/// gains. Leads III, aVR, aVL and aVF are derived from I and II.
pub fn generate_synthetic_record(
    label: &SyntheticLabel,
    duration_s: f64,
    sample_rate_hz: u32,
    seed: u64,
) -> Result<EcgRecord> {
    if !(duration_s.is_finite() && duration_s > 0.0) {
        return arg(format!("duration must be positive, got {duration_s}"));
    }
    if sample_rate_hz == 0 {
        return arg("sample rate must be positive");
    }
    label.validate()?;
    let n = (duration_s * sample_rate_hz as f64).round() as usize;
    if n == 0 {
        return arg("record would have no samples");
    }
    let fs = sample_rate_hz as f64;
    let shift = DomainShift::for_domain(label.domain);
    let mut rng = rng::stream(seed, &[0x5EC6]);

    let times: Vec<f64> = (0..n)
        .map(|i| {
            let jitter: f64 = if shift.jitter_s > 0.0 {
                shift.jitter_s * Distribution::<f64>::sample(&StandardNormal, &mut rng)
            } else {
                0.0
            };
            i as f64 * shift.clock / fs + jitter
        })
        .collect();
    let span = n as f64 * shift.clock / fs;

    let class = label.rhythm_class;
    let rr = 60.0 / label.heart_rate_bpm as f64;
    let mut morph = morphology(class, rr);
    for w in morph.waves.iter_mut() {
        w.amp *= rng.random_range(0.9..1.1);
    }
    let beats = beat_schedule(class, rr, -1.0, span + 1.0, &mut rng);

    let mut basis = Array2::<f64>::zeros((BASIS, n));
    let margin = 6.0 * shift.jitter_s;
    for &b in &beats {
        for (w, wave) in morph.waves.iter().enumerate() {
            if wave.amp == 0.0 {
                continue;
            }
            let c = b + wave.centre;
            let reach = 5.0 * wave.sigma;
            let lo = ((c - reach - margin) * fs / shift.clock).floor().max(0.0) as usize;
            let hi = (((c + reach + margin) * fs / shift.clock).ceil().max(0.0) as usize).min(n);
            let inv = 1.0 / (2.0 * wave.sigma * wave.sigma);
            for i in lo..hi {
                let d = times[i] - c;
                if d.abs() > reach {
                    continue;
                }
                let g = wave.amp * (-d * d * inv).exp();
                for l in 0..BASIS {
                    basis[[l, i]] += morph.gains[l][w] * g;
                }
            }
        }
    }
    if class == RhythmClass::AtrialFibrillation {
        let (p1, p2) = (rng.random::<f64>() * 2.0 * PI, rng.random::<f64>() * 2.0 * PI);
        for (i, &t) in times.iter().enumerate() {
            let f = 0.05 * (2.0 * PI * 5.7 * t + p1).sin() + 0.03 * (2.0 * PI * 7.3 * t + p2).sin();
            for l in 0..BASIS {
                basis[[l, i]] += FWAVE_GAINS[l] * f;
            }
        }
    }

    let mut leads = Array2::<f64>::zeros((NUM_LEADS, n));
    for i in 0..n {
        let (l1, l2) = (basis[[0, i]], basis[[1, i]]);
        leads[[0, i]] = l1;
        leads[[1, i]] = l2;
        leads[[2, i]] = l2 - l1;
        leads[[3, i]] = -(l1 + l2) / 2.0;
        leads[[4, i]] = l1 - l2 / 2.0;
        leads[[5, i]] = l2 - l1 / 2.0;
        for v in 0..6 {
            leads[[6 + v, i]] = basis[[2 + v, i]];
        }
    }
    for mut lead in leads.rows_mut() {
        let phase = rng.random::<f64>() * 2.0 * PI;
        for (x, &t) in lead.iter_mut().zip(&times) {
            let noise: f64 = StandardNormal.sample(&mut rng);
            *x = shift.amplitude * *x
                + shift.wander_mv * (2.0 * PI * shift.wander_hz * t + phase).sin()
                + MEASUREMENT_NOISE_MV * noise;
        }
    }
    let leads = leads.mapv(|v| v as f32);
    EcgRecord::new(leads, sample_rate_hz, format!("syn-{seed:016x}"), label.domain)
}
