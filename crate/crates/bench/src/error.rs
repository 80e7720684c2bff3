use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Core(#[from] meit_core::Error),
    #[error(transparent)]
    Metric(#[from] meit_metrics::MetricError),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("comparability violated: {0}")]
    Comparability(String),
    #[error("leakage: {0}")]
    Leakage(String),
}

impl BenchError {
    pub fn kind(&self) -> &'static str {
        match self {
            BenchError::Core(e) => e.kind(),
            BenchError::Metric(_) => "metric",
            BenchError::Config(_) => "config",
            BenchError::Io(_) => "io",
            BenchError::Json(_) => "json",
            BenchError::Csv(_) => "csv",
            BenchError::Comparability(_) => "comparability",
            BenchError::Leakage(_) => "leakage",
        }
    }
}

pub type Result<T> = std::result::Result<T, BenchError>;
