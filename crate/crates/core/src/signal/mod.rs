//! ECG records, synthetic two-domain generation, noise and file formats.

mod corpus;
mod detect;
mod io;
mod noise;
mod record;
mod synth;

pub use corpus::{
    build_corpus, plan_corpus, read_manifest, write_manifest, CorpusConfig, CorpusItem, CorpusPlan, EcgSource,
    ManifestEntry, ManifestSource,
};
pub use detect::{classify, detect_r_peaks, rr_stats, RrStats};
pub use io::{read_csv, read_record, read_wfdb, write_csv, write_record, MAGIC};
pub use noise::{add_gaussian_noise, NoiseSpec};
pub use record::{Domain, EcgRecord, LEAD_NAMES, NUM_LEADS};
pub use synth::{generate_synthetic_record, report_text, DomainShift, RhythmClass, SyntheticLabel};
