use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::record::EcgRecord;
use crate::error::{arg, Result};
use crate::rng;

/// Gaussian perturbation whose per-lead standard deviation is `level`
/// times that lead's own sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub level: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(level: f64, seed: u64) -> Result<Self> {
        if !(level.is_finite() && level >= 0.0) {
            return arg(format!("noise level must be a nonnegative number, got {level}"));
        }
        Ok(NoiseSpec { level, seed })
    }
}

fn sample_std(x: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = x.clone().count() as f64;
    if n < 2.0 {
        return 0.0;
    }
    let mean = x.clone().sum::<f64>() / n;
    (x.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Returns a noisy copy of `record`.
///
/// The standard-normal draws depend only on the seed, so for a fixed seed
/// the perturbations at different levels are scaled copies of each other.
pub fn add_gaussian_noise(record: &EcgRecord, spec: NoiseSpec) -> Result<EcgRecord> {
    NoiseSpec::new(spec.level, spec.seed)?;
    if spec.level == 0.0 {
        return Ok(record.clone());
    }
    let mut rng = rng::stream(spec.seed, &[0x401_5E]);
    let mut out = record.leads().clone();
    for mut lead in out.rows_mut() {
        let sigma = sample_std(lead.iter().map(|&v| f64::from(v)));
        let scale = spec.level * sigma;
        for v in lead.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = (f64::from(*v) + scale * z) as f32;
        }
    }
    record.replace_leads(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{generate_synthetic_record, Domain, RhythmClass, SyntheticLabel};

    fn base() -> EcgRecord {
        let l = SyntheticLabel::new(RhythmClass::NormalEcg, 80, Domain::A).unwrap();
        generate_synthetic_record(&l, 10.0, 500, 5).unwrap()
    }

    #[test]
    fn zero_level_is_identity() {
        let r = base();
        assert_eq!(add_gaussian_noise(&r, NoiseSpec::new(0.0, 3).unwrap()).unwrap(), r);
    }

    #[test]
    fn negative_level_rejected() {
        assert!(NoiseSpec::new(-0.1, 0).is_err());
        assert!(add_gaussian_noise(&base(), NoiseSpec { level: f64::NAN, seed: 0 }).is_err());
    }

    #[test]
    fn seeded_and_input_untouched() {
        let r = base();
        let copy = r.clone();
        let spec = NoiseSpec::new(0.1, 9).unwrap();
        let a = add_gaussian_noise(&r, spec).unwrap();
        let b = add_gaussian_noise(&r, spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(r, copy);
        assert_ne!(a, r);
    }

    #[test]
    fn residual_std_matches_level() {
        let r = base();
        let out = add_gaussian_noise(&r, NoiseSpec::new(0.2, 17).unwrap()).unwrap();
        for l in 0..12 {
            let sigma = sample_std(r.lead(l).iter().map(|&v| f64::from(v)));
            let (o, i) = (out.lead(l), r.lead(l));
            let s = sample_std(o.iter().zip(i.iter()).map(|(&o, &i)| f64::from(o) - f64::from(i)));
            assert!((s / (0.2 * sigma) - 1.0).abs() < 0.03, "lead {l}: {s} vs {}", 0.2 * sigma);
        }
    }
}
