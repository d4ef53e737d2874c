//! Binary checkpoints: magic, format version, a JSON layout header, then the
//! flat parameter array as little-endian `f64`.

use std::io::{Read, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{RelModel, VocabEmbedding};
use crate::error::{Error, Result};
use crate::numgrad::{Layout, ParamVector};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"LLRM";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    d_emb: usize,
    d_hid: usize,
    layout: Layout,
}

pub fn save_checkpoint(model: &RelModel, mut w: impl Write) -> Result<()> {
    let header = serde_json::to_vec(&Header {
        d_emb: model.d_emb(),
        d_hid: model.d_hid(),
        layout: (**model.params().layout()).clone(),
    })?;
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(header.len() as u64).to_le_bytes())?;
    w.write_all(&header)?;
    for v in model.params().values() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Reads a checkpoint written by [`save_checkpoint`]; the vocabulary must have
/// the embedding width the checkpoint was trained with.
pub fn load_checkpoint(mut r: impl Read, vocab: Arc<VocabEmbedding>) -> Result<RelModel> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::invalid("not a model checkpoint"));
    }
    let mut u32b = [0u8; 4];
    r.read_exact(&mut u32b)?;
    let version = u32::from_le_bytes(u32b);
    if version != CHECKPOINT_VERSION {
        return Err(Error::invalid(format!("unsupported checkpoint version {version}")));
    }
    let mut u64b = [0u8; 8];
    r.read_exact(&mut u64b)?;
    let mut header = vec![0u8; u64::from_le_bytes(u64b) as usize];
    r.read_exact(&mut header)?;
    let header: Header = serde_json::from_slice(&header)?;
    if header.d_emb != vocab.dim() {
        return Err(Error::DimensionMismatch {
            op: "load_checkpoint embedding width",
            expected: header.d_emb,
            got: vocab.dim(),
        });
    }
    let n = header.layout.total_len();
    let mut values = Vec::with_capacity(n);
    let mut buf = [0u8; 8];
    for _ in 0..n {
        r.read_exact(&mut buf)?;
        values.push(f64::from_le_bytes(buf));
    }
    let params = ParamVector::from_values(Arc::new(header.layout), values)?;
    RelModel::from_parts(params, vocab, header.d_hid)
}
