use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_LEADS: usize = 12;
pub const LEAD_NAMES: [&str; NUM_LEADS] =
    ["I", "II", "III", "aVR", "aVL", "aVF", "V1", "V2", "V3", "V4", "V5", "V6"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Domain {
    A,
    B,
    #[serde(rename = "external")]
    External,
}

impl Domain {
    pub fn tag(self) -> u8 {
        match self {
            Domain::A => 0,
            Domain::B => 1,
            Domain::External => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Domain> {
        match tag {
            0 => Some(Domain::A),
            1 => Some(Domain::B),
            2 => Some(Domain::External),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Domain::A => "A",
            Domain::B => "B",
            Domain::External => "external",
        }
    }
}

/// A 12-lead recording in millivolts, one row per lead.
///
/// Samples are kept in single precision, which is also the on-disk format,
/// so a write/read cycle reproduces the record bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct EcgRecord {
    leads: Array2<f32>,
    sample_rate_hz: u32,
    record_id: String,
    domain: Domain,
}

impl EcgRecord {
    pub fn new(leads: Array2<f32>, sample_rate_hz: u32, record_id: impl Into<String>, domain: Domain) -> Result<Self> {
        if leads.nrows() != NUM_LEADS {
            return Err(Error::LeadCount(leads.nrows()));
        }
        if sample_rate_hz == 0 {
            return Err(Error::Argument("sample rate must be positive".into()));
        }
        if leads.ncols() == 0 {
            return Err(Error::Shape("record has no samples".into()));
        }
        if let Some(pos) = leads.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("sample {pos} is not finite")));
        }
        Ok(EcgRecord { leads, sample_rate_hz, record_id: record_id.into(), domain })
    }

    pub fn leads(&self) -> &Array2<f32> {
        &self.leads
    }

    pub fn lead(&self, i: usize) -> ArrayView1<'_, f32> {
        self.leads.row(i)
    }

    pub fn lead_names(&self) -> [&'static str; NUM_LEADS] {
        LEAD_NAMES
    }

    pub fn num_samples(&self) -> usize {
        self.leads.ncols()
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn duration_s(&self) -> f64 {
        self.num_samples() as f64 / self.sample_rate_hz as f64
    }

    pub fn record_id(&self) -> &str {
        &self.record_id
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn with_id(mut self, record_id: impl Into<String>) -> Self {
        self.record_id = record_id.into();
        self
    }

    pub fn to_f64(&self) -> Array2<f64> {
        self.leads.mapv(f64::from)
    }

    pub(crate) fn replace_leads(&self, leads: Array2<f32>) -> Result<Self> {
        EcgRecord::new(leads, self.sample_rate_hz, self.record_id.clone(), self.domain)
    }
}
