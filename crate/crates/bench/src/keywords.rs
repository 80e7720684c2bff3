use meit_core::signal::RhythmClass;

/// Distinctive phrase of every class except plain sinus rhythm.
const PHRASES: [(&str, RhythmClass); 7] = [
    ("normal sinus rhythm", RhythmClass::NormalEcg),
    ("sinus bradycardia", RhythmClass::SinusBradycardia),
    ("sinus tachycardia", RhythmClass::SinusTachycardia),
    ("atrial fibrillation", RhythmClass::AtrialFibrillation),
    ("right bundle branch block", RhythmClass::RightBundleBranchBlock),
    ("left bundle branch block", RhythmClass::LeftBundleBranchBlock),
    ("st elevation", RhythmClass::StElevation),
];

/// Reads the rhythm class off a report by its keyword phrase.
///
/// Exactly one distinctive phrase must be present; with none, "sinus
/// rhythm" alone means [`RhythmClass::SinusRhythm`]. Anything else is
/// unparseable.
pub fn parse_rhythm(report: &str) -> Option<RhythmClass> {
    let words = meit_metrics::tokenize(report).join(" ");
    let padded = format!(" {words} ");
    let has = |p: &str| padded.contains(&format!(" {p} "));
    let found: Vec<RhythmClass> = PHRASES.iter().filter(|(p, _)| has(p)).map(|&(_, c)| c).collect();
    match found.as_slice() {
        [c] => Some(*c),
        [] if has("sinus rhythm") => Some(RhythmClass::SinusRhythm),
        _ => None,
    }
}

/// Share of reports whose parsed class equals the label.
pub fn keyword_accuracy<S: AsRef<str>>(reports: &[S], labels: &[RhythmClass]) -> f64 {
    if reports.is_empty() {
        return 0.0;
    }
    let hits = reports.iter().zip(labels).filter(|(r, &l)| parse_rhythm(r.as_ref()) == Some(l)).count();
    hits as f64 / reports.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use meit_core::signal::{report_text, Domain, SyntheticLabel};

    #[test]
    fn every_template_parses_to_its_class() {
        for class in RhythmClass::ALL {
            for &hr in class.heart_rate_grid() {
                let r = report_text(&SyntheticLabel::new(class, hr, Domain::A).unwrap());
                assert_eq!(parse_rhythm(&r), Some(class), "{r}");
            }
        }
    }

    #[test]
    fn ambiguous_or_empty_reports_fail() {
        assert_eq!(parse_rhythm("right bundle branch block. left bundle branch block."), None);
        assert_eq!(parse_rhythm("heart rate 80 bpm."), None);
        assert_eq!(parse_rhythm(""), None);
        assert_eq!(parse_rhythm("sinus rhythm"), Some(RhythmClass::SinusRhythm));
        assert_eq!(parse_rhythm("sinus rhythmic"), None);
    }

    #[test]
    fn accuracy_counts_hits() {
        let reports = ["sinus bradycardia.", "atrial fibrillation.", "nonsense"];
        let labels = [RhythmClass::SinusBradycardia, RhythmClass::SinusRhythm, RhythmClass::NormalEcg];
        assert!((keyword_accuracy(&reports, &labels) - 1.0 / 3.0).abs() < 1e-15);
    }
}
