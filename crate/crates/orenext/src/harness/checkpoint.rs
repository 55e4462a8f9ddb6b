//! Model checkpoints.
//!
//! A checkpoint is a single self-describing binary file: a magic tag and
//! format version, the model configuration as TOML (so a loaded model
//! never needs an external config), the flat parameter vector as
//! little-endian f64, and a SHA-256 digest of everything before it.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::harness::{ModelConfig, ModelParams};
use crate::tensor::ParamGroup;

const MAGIC: [u8; 4] = *b"ORNX";
const VERSION: u32 = 1;

/// Serializes the model configuration and parameters to `path`.
pub fn save_checkpoint(path: &Path, cfg: &ModelConfig, params: &ModelParams) -> Result<()> {
    let cfg_toml =
        toml::to_string(cfg).map_err(|e| Error::config(format!("unencodable model config: {e}")))?;
    let flat = params.flatten();
    let mut bytes =
        Vec::with_capacity(4 + 4 + 8 + cfg_toml.len() + 8 + flat.len() * 8 + 32);
    bytes.extend_from_slice(&MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    bytes.extend_from_slice(&(cfg_toml.len() as u64).to_le_bytes());
    bytes.extend_from_slice(cfg_toml.as_bytes());
    bytes.extend_from_slice(&(flat.len() as u64).to_le_bytes());
    for v in &flat {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let digest = Sha256::digest(&bytes);
    bytes.extend_from_slice(&digest);
    fs::write(path, bytes)?;
    Ok(())
}

fn corrupt(path: &Path, reason: impl Into<String>) -> Error {
    Error::Corrupt { file: path.display().to_string(), reason: reason.into() }
}

/// Loads a checkpoint, verifying the digest, magic, version, and parameter
/// count before reconstructing the model.
pub fn load_checkpoint(path: &Path) -> Result<(ModelConfig, ModelParams)> {
    let bytes = fs::read(path)?;
    if bytes.len() < 4 + 4 + 8 + 8 + 32 {
        return Err(corrupt(path, "file too short"));
    }
    let (head, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(head).as_slice() != digest {
        return Err(corrupt(path, "checksum mismatch"));
    }
    if head[..4] != MAGIC {
        return Err(corrupt(path, "bad magic"));
    }
    let version = u32::from_le_bytes(head[4..8].try_into().expect("fixed-width slice"));
    if version != VERSION {
        return Err(corrupt(path, format!("unsupported version {version}")));
    }
    let cfg_len =
        u64::from_le_bytes(head[8..16].try_into().expect("fixed-width slice")) as usize;
    let cfg_end = 16usize
        .checked_add(cfg_len)
        .filter(|&e| e + 8 <= head.len())
        .ok_or_else(|| corrupt(path, "config length out of range"))?;
    let cfg_toml = std::str::from_utf8(&head[16..cfg_end])
        .map_err(|_| corrupt(path, "config is not UTF-8"))?;
    let cfg: ModelConfig =
        toml::from_str(cfg_toml).map_err(|e| corrupt(path, format!("bad config: {e}")))?;
    cfg.validate()?;

    let count = u64::from_le_bytes(head[cfg_end..cfg_end + 8].try_into().expect("fixed-width slice"))
        as usize;
    let body = &head[cfg_end + 8..];
    if body.len() != count * 8 {
        return Err(corrupt(
            path,
            format!("expected {count} parameters, found {} bytes", body.len()),
        ));
    }
    let flat: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("fixed-width chunk")))
        .collect();
    let mut params = ModelParams::init(&cfg, &mut || 0.5)?;
    if params.flatten().len() != count {
        return Err(corrupt(
            path,
            format!("parameter count {count} does not fit the stored config"),
        ));
    }
    params.load_flat(&flat)?;
    Ok((cfg, params))
}
