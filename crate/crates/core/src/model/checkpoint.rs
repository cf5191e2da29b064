//! Checkpoint container.
//!
//! Layout (little-endian): `"SMCK"`, u16 version, u64 config hash,
//! u32 config-JSON length + bytes, u64 step, u32 tensor count, then for each
//! tensor a u32 length; then parameter, first-moment and second-moment
//! blobs as f32 in that order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{ModelConfig, ModelState, Network};
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u16 = 1;
const MAGIC: &[u8; 4] = b"SMCK";

pub fn save_checkpoint(state: &ModelState, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let config = serde_json::to_vec(state.config())?;
    w.write_all(MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&state.config().hash().to_le_bytes())?;
    w.write_all(&(config.len() as u32).to_le_bytes())?;
    w.write_all(&config)?;
    w.write_all(&state.step.to_le_bytes())?;
    w.write_all(&(state.net.params.len() as u32).to_le_bytes())?;
    for p in &state.net.params {
        w.write_all(&(p.len() as u32).to_le_bytes())?;
    }
    for group in [&state.net.params, &state.m, &state.v] {
        for t in group.iter() {
            for v in t {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn read_exact<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|e| Error::Checkpoint(format!("truncated checkpoint: {e}")))?;
    Ok(buf)
}

/// Loads a checkpoint. With `expected`, the stored config must hash equal.
pub fn load_checkpoint(path: &Path, expected: Option<&ModelConfig>) -> Result<ModelState> {
    let mut r = BufReader::new(File::open(path)?);
    if &read_exact::<4>(&mut r)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = u16::from_le_bytes(read_exact(&mut r)?);
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
    }
    let hash = u64::from_le_bytes(read_exact(&mut r)?);
    let len = u32::from_le_bytes(read_exact(&mut r)?) as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json).map_err(|e| Error::Checkpoint(format!("truncated checkpoint: {e}")))?;
    let config: ModelConfig =
        serde_json::from_slice(&json).map_err(|e| Error::Checkpoint(format!("unreadable config: {e}")))?;
    if config.hash() != hash {
        return Err(Error::Checkpoint("config hash does not match stored config".into()));
    }
    if let Some(want) = expected {
        if want.hash() != hash {
            return Err(Error::Checkpoint("checkpoint was written for a different model config".into()));
        }
    }
    let step = u64::from_le_bytes(read_exact(&mut r)?);
    let count = u32::from_le_bytes(read_exact(&mut r)?) as usize;
    let shapes = config.param_shapes();
    if count != shapes.len() {
        return Err(Error::Checkpoint(format!("{count} tensors, config implies {}", shapes.len())));
    }
    for &want in &shapes {
        let got = u32::from_le_bytes(read_exact(&mut r)?) as usize;
        if got != want {
            return Err(Error::Checkpoint(format!("tensor of length {got}, config implies {want}")));
        }
    }
    let read_group = |r: &mut BufReader<File>| -> Result<Vec<Vec<f32>>> {
        shapes
            .iter()
            .map(|&n| {
                let mut bytes = vec![0u8; n * 4];
                r.read_exact(&mut bytes).map_err(|e| Error::Checkpoint(format!("truncated checkpoint: {e}")))?;
                Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
            })
            .collect()
    };
    let params = read_group(&mut r)?;
    let m = read_group(&mut r)?;
    let v = read_group(&mut r)?;
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", rest.len())));
    }
    Ok(ModelState { net: Network::from_params(config, params)?, m, v, step })
}
