use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite data: {0}")]
    Data(String),
    #[error("expected 12 leads, found {0}")]
    LeadCount(usize),
    #[error("malformed header: {0}")]
    Header(String),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("token id {id} out of range for vocabulary of {vocab}")]
    TokenRange { id: u32, vocab: usize },
    #[error("sequence of {len} tokens exceeds max_seq_len {max}")]
    ContextOverflow { len: usize, max: usize },
    #[error("loss mask has no true entries")]
    EmptyMask,
    #[error("training diverged at step {step}: loss {loss}")]
    Divergence { step: usize, loss: f64 },
    #[error("incompatible checkpoint: {0}")]
    Incompatible(String),
    #[error("unknown record {0}")]
    UnknownRecord(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Metric(#[from] meit_metrics::MetricError),
}

impl Error {
    /// Stable short name, used in machine-readable error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Argument(_) => "argument",
            Error::Shape(_) => "shape",
            Error::Data(_) => "data",
            Error::LeadCount(_) => "lead_count",
            Error::Header(_) => "header",
            Error::Truncated { .. } => "truncated",
            Error::Checksum { .. } => "checksum",
            Error::TokenRange { .. } => "token_range",
            Error::ContextOverflow { .. } => "context_overflow",
            Error::EmptyMask => "empty_mask",
            Error::Divergence { .. } => "divergence",
            Error::Incompatible(_) => "incompatible",
            Error::UnknownRecord(_) => "unknown_record",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
            Error::Metric(_) => "metric",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn arg<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Argument(msg.into()))
}
