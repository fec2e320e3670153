//! Checkpoint layout, little-endian:
//!
//! ```text
//! "VSEM" | u32 version | u32 n | n bytes JSON {config, vocab, resolution}
//! u32 epochs | epochs x 4 f64 (kl, recon, reg, total)
//! u32 tensors | per tensor: u32 name_len | name | u8 group | u32 rank | rank x u32 | f64 values
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::binary::{put_u32, read_file, write_file, Reader};
use crate::error::{Error, Result};
use crate::gradcore::{ParamGroup, ParamStore, Tensor};
use crate::vae::{LossReport, ModelCheckpoint, TrainConfig};
use crate::voxeldata::Vocab;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"VSEM";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    config: TrainConfig,
    vocab: Vocab,
    resolution: usize,
}

pub fn checkpoint_to_bytes(model: &ModelCheckpoint) -> Result<Vec<u8>> {
    let mut out = CHECKPOINT_MAGIC.to_vec();
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let header = serde_json::to_vec(&Header {
        config: model.config.clone(),
        vocab: model.vocab,
        resolution: model.resolution,
    })?;
    put_u32(&mut out, header.len())?;
    out.extend_from_slice(&header);
    put_u32(&mut out, model.history.len())?;
    for h in &model.history {
        for v in [h.kl, h.recon, h.reg, h.total] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    put_u32(&mut out, model.params.len())?;
    for id in model.params.ids() {
        let name = model.params.name(id).as_bytes();
        put_u32(&mut out, name.len())?;
        out.extend_from_slice(name);
        out.push(model.params.group(id).code());
        let t = model.params.value(id);
        put_u32(&mut out, t.shape().len())?;
        for &d in t.shape() {
            put_u32(&mut out, d)?;
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<ModelCheckpoint> {
    let mut r = Reader::new(bytes);
    r.expect_magic(CHECKPOINT_MAGIC)?;
    let at = r.offset();
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format { offset: at, detail: format!("unsupported checkpoint version {version}") });
    }
    let n = r.u32()? as usize;
    let at = r.offset();
    let header: Header = serde_json::from_slice(r.take(n)?)
        .map_err(|e| Error::Format { offset: at, detail: format!("config block: {e}") })?;
    let epochs = r.u32()? as usize;
    let mut history = Vec::with_capacity(epochs.min(1 << 16));
    for _ in 0..epochs {
        history.push(LossReport { kl: r.f64()?, recon: r.f64()?, reg: r.f64()?, total: r.f64()? });
    }
    let count = r.u32()? as usize;
    let mut params = ParamStore::new();
    for _ in 0..count {
        let len = r.u32()? as usize;
        let at = r.offset();
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Format { offset: at, detail: "tensor name is not UTF-8".into() })?
            .to_string();
        let code = r.u8()?;
        let Some(group) = ParamGroup::from_code(code) else {
            return r.fail(format!("unknown parameter group {code}"));
        };
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let len: usize = shape.iter().product();
        if len > bytes.len() / 8 {
            return r.fail(format!("tensor {name} claims {len} values"));
        }
        let data = (0..len).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        params.insert(name, group, Tensor::new(shape, data)?)?;
    }
    r.finish()?;
    ModelCheckpoint::from_parts(header.config, header.vocab, header.resolution, params, history)
}

pub fn save_checkpoint(path: &Path, model: &ModelCheckpoint) -> Result<()> {
    write_file(path, &checkpoint_to_bytes(model)?)
}

pub fn load_checkpoint(path: &Path) -> Result<ModelCheckpoint> {
    checkpoint_from_bytes(&read_file(path)?)
}
