//! Multimodal ECG instruction tuning at desk scale.
//!
//! A synthetic two-domain 12-lead corpus, a temporal-convolution encoder
//! whose output is injected as key/value prefix rows into every attention
//! layer of a small decoder, LoRA adapters on a frozen random backbone,
//! and a label-masked autoregressive trainer.

pub mod encoder;
pub mod error;
pub mod infer;
pub mod instruct;
pub mod model;
pub mod rng;
pub mod signal;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
