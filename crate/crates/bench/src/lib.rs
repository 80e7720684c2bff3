//! Benchmark harness for ECG report generation: forges the synthetic
//! corpus, trains the conditions each task needs, generates greedily,
//! scores and writes tables and charts.

pub mod config;
pub mod data;
pub mod error;
pub mod harness;
pub mod keywords;
pub mod report;

pub use config::{BenchConfig, DataConfig, EvalConfig};
pub use data::{Forged, Mode};
pub use error::{BenchError, Result};
pub use harness::{
    run_ablation, run_noise, run_quality, run_zeroshot, Bench, BenchResult, Condition, Curve, EvalSpec, ModelKey,
    SamplePair, Task, Trained,
};
pub use keywords::{keyword_accuracy, parse_rhythm};
pub use report::{artifact_names, emit_report, read_results_csv};
