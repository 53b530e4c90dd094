//! Head checkpoints.
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 8    | magic `ARENAHDS`                        |
//! | 8      | 4    | version (`u32`, currently 1)            |
//! | 12     | 4    | kind: 1 preference heads, 2 absolute    |
//! | 16     | 4    | embedding dimensionality `d`            |
//! | 20     | 4    | reserved, zero                          |
//! | 24     | 8    | parameter count `n` (`u64`)             |
//! | 32     | 8·n  | parameters, `f64` little-endian         |
//!
//! The parameter block uses the flat layouts of
//! [`ScoreHeadParams::to_flat`] and [`AbsoluteHeadParams::to_flat`].

use std::path::Path;

use super::{AbsoluteHeadParams, ScoreHeadParams};
use crate::error::{ArenaError, Result};

pub const CHECKPOINT_MAGIC: [u8; 8] = *b"ARENAHDS";
pub const CHECKPOINT_VERSION: u32 = 1;
const HEADER_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub enum Checkpoint {
    Preference(ScoreHeadParams),
    Absolute(AbsoluteHeadParams),
}

impl Checkpoint {
    fn kind(&self) -> u32 {
        match self {
            Checkpoint::Preference(_) => 1,
            Checkpoint::Absolute(_) => 2,
        }
    }

    fn dim(&self) -> usize {
        match self {
            Checkpoint::Preference(p) => p.dim(),
            Checkpoint::Absolute(p) => p.dim(),
        }
    }

    fn flat(&self) -> Vec<f64> {
        match self {
            Checkpoint::Preference(p) => p.to_flat(),
            Checkpoint::Absolute(p) => p.to_flat(),
        }
    }

    pub fn into_preference(self) -> Result<ScoreHeadParams> {
        match self {
            Checkpoint::Preference(p) => Ok(p),
            Checkpoint::Absolute(_) => Err(ArenaError::Config("checkpoint holds absolute heads".into())),
        }
    }

    pub fn into_absolute(self) -> Result<AbsoluteHeadParams> {
        match self {
            Checkpoint::Absolute(p) => Ok(p),
            Checkpoint::Preference(_) => Err(ArenaError::Config("checkpoint holds preference heads".into())),
        }
    }
}

pub fn write_checkpoint(ck: &Checkpoint) -> Vec<u8> {
    let flat = ck.flat();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * flat.len());
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&ck.kind().to_le_bytes());
    out.extend_from_slice(&(ck.dim() as u32).to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    out.extend_from_slice(&(flat.len() as u64).to_le_bytes());
    for x in flat {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn read_checkpoint(path: &Path, bytes: &[u8]) -> Result<Checkpoint> {
    let bad = |m: String| ArenaError::format(path, m);
    if bytes.len() < HEADER_LEN || bytes[..8] != CHECKPOINT_MAGIC {
        return Err(bad("not a head checkpoint".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let version = u32_at(8);
    if version != CHECKPOINT_VERSION {
        return Err(bad(format!("unsupported checkpoint version {version}")));
    }
    let kind = u32_at(12);
    let d = u32_at(16) as usize;
    let n = u64::from_le_bytes(bytes[24..32].try_into().unwrap()) as usize;
    if bytes.len() != HEADER_LEN + 8 * n {
        return Err(bad(format!(
            "header declares {n} parameters but the file holds {} bytes of payload",
            bytes.len() - HEADER_LEN
        )));
    }
    let flat: Vec<f64> = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if flat.iter().any(|x| !x.is_finite()) {
        return Err(bad("non-finite parameter".into()));
    }
    let ck = match kind {
        1 => Checkpoint::Preference(ScoreHeadParams::from_flat(d, &flat).map_err(|e| bad(e.to_string()))?),
        2 => Checkpoint::Absolute(AbsoluteHeadParams::from_flat(d, &flat).map_err(|e| bad(e.to_string()))?),
        k => return Err(bad(format!("unknown checkpoint kind {k}"))),
    };
    Ok(ck)
}

pub fn save_checkpoint(path: impl AsRef<Path>, ck: &Checkpoint) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, write_checkpoint(ck)).map_err(|e| ArenaError::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| ArenaError::io(path, e))?;
    read_checkpoint(path, &bytes)
}
