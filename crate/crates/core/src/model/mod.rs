//! Decoder-only transformer whose attention layers take the ECG embedding
//! as extra key/value rows ahead of the text.

mod attention;
mod forward;
mod generate;
mod ops;
mod params;

pub use attention::{fused_attention, AttentionCache, PrefixVisibility};
pub use forward::{ForwardCache, ForwardOptions, ModelGrads};
pub use generate::{generate, generate_with, Decode, KvCache};
pub use ops::{gelu, gelu_grad, layer_norm, softmax_rows};
pub use params::{Layer, LayerNorm, Linear, LinearCache, LoraAdapter, LoraConfig, ModelConfig, ModelParams, SLOTS};
