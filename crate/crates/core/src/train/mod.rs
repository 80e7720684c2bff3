//! Label-masked autoregressive training of the adapters and the encoder.

mod adamw;
mod checkpoint;
mod loss;
mod schedule;
mod trainer;

pub use adamw::{clip_global_norm, AdamW};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use loss::{masked_autoregressive_loss, masked_nll};
pub use schedule::LinearSchedule;
pub use trainer::{reference_text, EpochLog, Precision, StepLog, TrainConfig, TrainLog, TrainState, Trainer};
