use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adamw::AdamW;
use super::trainer::{TrainConfig, TrainState};
use crate::encoder::{EncoderConfig, EncoderParams};
use crate::error::{Error, Result};
use crate::model::{LoraConfig, ModelConfig, ModelParams};
use crate::tensor::TensorTable;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"MEITCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

/// The JSON block of a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub model: ModelConfig,
    pub lora: Option<LoraConfig>,
    pub encoder: EncoderConfig,
    pub train: TrainConfig,
    pub vocab_hash: String,
    pub step: usize,
    pub optimizer_t: u64,
    /// All randomness is derived from (seed, step); this is the seed.
    pub rng_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub state: TrainState,
}

impl Checkpoint {
    pub fn new(state: TrainState, lora: Option<LoraConfig>, train: TrainConfig, vocab_hash: String) -> Self {
        let meta = CheckpointMeta {
            model: state.model.config.clone(),
            lora,
            encoder: state.encoder.config.clone(),
            rng_seed: train.seed,
            train,
            vocab_hash,
            step: state.step,
            optimizer_t: state.optimizer.t,
        };
        Checkpoint { meta, state }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut table = TensorTable::new();
        self.state.model.export(&mut table);
        self.state.encoder.export(&mut table);
        let opt = &self.state.optimizer;
        table.put_raw("optim.m", vec![opt.m.len()], opt.m.clone());
        table.put_raw("optim.v", vec![opt.v.len()], opt.v.clone());

        let json = serde_json::to_vec(&self.meta)?;
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&(table.len() as u32).to_le_bytes());
        for (name, dims, data) in table.iter() {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(dims.len() as u8);
            for &d in dims {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }

    /// Parses a checkpoint. With `vocab_hash` set, a checkpoint built on a
    /// different vocabulary is rejected.
    pub fn from_bytes(buf: &[u8], vocab_hash: Option<&str>) -> Result<Self> {
        if buf.len() < 8 + 4 + 4 || &buf[..8] != CHECKPOINT_MAGIC {
            return Err(Error::Header("not a MEITCKPT file".into()));
        }
        let body = &buf[..buf.len() - 4];
        let stored = u32::from_le_bytes(buf[buf.len() - 4..].try_into().unwrap());
        let computed = crc32fast::hash(body);
        let mut r = Reader { buf: body, pos: 8 };
        let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(Error::Incompatible(format!("checkpoint version {version}, expected {CHECKPOINT_VERSION}")));
        }
        if stored != computed {
            return Err(Error::Checksum { stored, computed });
        }
        let json_len = r.u64()? as usize;
        let meta: CheckpointMeta = serde_json::from_slice(r.take(json_len)?)?;
        if let Some(h) = vocab_hash {
            if h != meta.vocab_hash {
                return Err(Error::Incompatible(format!(
                    "vocabulary hash {} does not match checkpoint {}",
                    h, meta.vocab_hash
                )));
            }
        }
        let count = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
        let mut table = TensorTable::new();
        for _ in 0..count {
            let n = u16::from_le_bytes(r.take(2)?.try_into().unwrap()) as usize;
            let name = std::str::from_utf8(r.take(n)?)
                .map_err(|_| Error::Header("tensor name is not UTF-8".into()))?
                .to_owned();
            let ndim = r.take(1)?[0] as usize;
            let dims: Vec<usize> = (0..ndim).map(|_| r.u64().map(|d| d as usize)).collect::<Result<_>>()?;
            let len: usize = dims.iter().product();
            let data = r
                .take(len.checked_mul(8).ok_or_else(|| Error::Header("tensor too large".into()))?)?
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            table.put_raw(name, dims, data);
        }
        if r.pos != body.len() {
            return Err(Error::Header("trailing bytes after tensor table".into()));
        }

        let model = ModelParams::import(&meta.model, meta.lora.as_ref(), &table)?;
        let encoder = EncoderParams::import(&meta.encoder, &table)?;
        let (_, m) = table.raw("optim.m")?;
        let (_, v) = table.raw("optim.v")?;
        let t = &meta.train;
        let mut optimizer = AdamW::new(m.len(), t.beta1, t.beta2, t.eps, t.weight_decay);
        if v.len() != m.len() {
            return Err(Error::Incompatible("optimizer moment sizes differ".into()));
        }
        optimizer.m = m.to_vec();
        optimizer.v = v.to_vec();
        optimizer.t = meta.optimizer_t;
        let state = TrainState { model, encoder, optimizer, step: meta.step };
        Ok(Checkpoint { meta, state })
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let left = self.buf.len() - self.pos;
        if left < n {
            return Err(Error::Truncated { expected: n, found: left });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn save_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<()> {
    fs::write(path, ckpt.to_bytes()?)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>, vocab_hash: Option<&str>) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&fs::read(path)?, vocab_hash)
}
