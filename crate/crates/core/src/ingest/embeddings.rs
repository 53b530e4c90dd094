//! Binary embedding stores.
//!
//! Layout of the payload file (all integers little-endian):
//!
//! | offset | size | field                          |
//! |--------|------|--------------------------------|
//! | 0      | 8    | magic `ARENAEMB`               |
//! | 8      | 4    | version (`u32`, currently 1)   |
//! | 12     | 4    | dimensionality `d` (`u32`)     |
//! | 16     | 8    | row count (`u64`)              |
//! | 24     | 4·d·count | rows of `f32`, row-major  |
//!
//! Row keys live in a JSON sidecar next to the payload (`<file>.keys.json`),
//! listing `{owner_id, kind}` in row order.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{ArenaError, Result};

pub const EMBEDDING_MAGIC: [u8; 8] = *b"ARENAEMB";
pub const EMBEDDING_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 24;
pub const NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingKind {
    PromptText,
    PromptImage,
    NormalViews,
    RgbViews,
}

/// Identifies one vector: a prompt embedding is keyed by prompt id, a view
/// embedding by asset id. Multi-view renders arrive already tiled into a single
/// grid image, so there is exactly one vector per `(owner, kind)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EmbeddingKey {
    pub owner_id: String,
    pub kind: EmbeddingKind,
}

impl EmbeddingKey {
    pub fn new(owner_id: impl Into<String>, kind: EmbeddingKind) -> Self {
        EmbeddingKey {
            owner_id: owner_id.into(),
            kind,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct KeyIndex {
    version: u32,
    keys: Vec<EmbeddingKey>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    keys: Vec<EmbeddingKey>,
    data: Vec<f32>,
    index: HashMap<EmbeddingKey, usize>,
    renormalized: usize,
}

impl EmbeddingStore {
    pub fn new(dim: usize) -> Self {
        EmbeddingStore {
            dim,
            keys: Vec::new(),
            data: Vec::new(),
            index: HashMap::new(),
            renormalized: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// Number of vectors whose norm was off by more than [`NORM_TOLERANCE`]
    /// and had to be rescaled on the way in.
    pub fn renormalized_count(&self) -> usize {
        self.renormalized
    }

    /// Inserts a vector, L2-normalizing it if needed. Returns whether the
    /// vector was rescaled.
    pub fn insert(&mut self, key: EmbeddingKey, vector: &[f32]) -> Result<bool> {
        if vector.len() != self.dim {
            return Err(ArenaError::invalid(
                "vector",
                format!(
                    "{:?} for '{}' has length {}, store dimensionality is {}",
                    key.kind,
                    key.owner_id,
                    vector.len(),
                    self.dim
                ),
            ));
        }
        if self.index.contains_key(&key) {
            return Err(ArenaError::Duplicate {
                kind: "embedding",
                id: format!("{}/{:?}", key.owner_id, key.kind),
            });
        }
        let (row, rescaled) = normalize_row(vector).ok_or_else(|| {
            ArenaError::invalid(
                "vector",
                format!("{:?} for '{}' is zero or non-finite", key.kind, key.owner_id),
            )
        })?;
        self.index.insert(key.clone(), self.keys.len());
        self.keys.push(key);
        self.data.extend_from_slice(&row);
        if rescaled {
            self.renormalized += 1;
        }
        Ok(rescaled)
    }

    pub fn get(&self, key: &EmbeddingKey) -> Option<&[f32]> {
        self.index
            .get(key)
            .map(|&i| &self.data[i * self.dim..(i + 1) * self.dim])
    }

    pub fn lookup(&self, owner_id: &str, kind: EmbeddingKind) -> Result<&[f32]> {
        self.get(&EmbeddingKey::new(owner_id, kind))
            .ok_or_else(|| ArenaError::UnknownIds {
                kind: "embedding",
                ids: vec![format!("{owner_id}/{kind:?}")],
            })
    }

    /// The vector widened to `f64` for the score heads.
    pub fn lookup_f64(&self, owner_id: &str, kind: EmbeddingKind) -> Result<Vec<f64>> {
        Ok(self.lookup(owner_id, kind)?.iter().map(|&x| f64::from(x)).collect())
    }

    pub fn keys(&self) -> impl Iterator<Item = &EmbeddingKey> {
        self.keys.iter()
    }

    /// Adds every record of `other`. Both stores must share `d`.
    pub fn merge(&mut self, other: &EmbeddingStore) -> Result<()> {
        if other.dim != self.dim {
            return Err(ArenaError::Config(format!(
                "embedding dimensionality mismatch: {} vs {}",
                self.dim, other.dim
            )));
        }
        for (i, key) in other.keys.iter().enumerate() {
            self.insert(key.clone(), &other.data[i * other.dim..(i + 1) * other.dim])?;
        }
        self.renormalized += other.renormalized;
        Ok(())
    }

    pub fn encode(&self) -> Vec<u8> {
        encode_rows(self.dim, self.keys.len(), &self.data)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.encode()).map_err(|e| ArenaError::io(path, e))?;
        let sidecar = keys_path(path);
        let index = KeyIndex {
            version: EMBEDDING_VERSION,
            keys: self.keys.clone(),
        };
        let text = serde_json::to_string_pretty(&index)?;
        std::fs::write(&sidecar, text).map_err(|e| ArenaError::io(&sidecar, e))
    }
}

/// Encodes a header plus raw rows without touching their norms.
pub fn encode_rows(dim: usize, count: usize, data: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + data.len() * 4);
    out.extend_from_slice(&EMBEDDING_MAGIC);
    out.extend_from_slice(&EMBEDDING_VERSION.to_le_bytes());
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    out.extend_from_slice(&(count as u64).to_le_bytes());
    for x in data {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn keys_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".keys.json");
    PathBuf::from(name)
}

fn normalize_row(v: &[f32]) -> Option<(Vec<f32>, bool)> {
    if v.iter().any(|x| !x.is_finite()) {
        return None;
    }
    let norm = v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
    if norm == 0.0 {
        return None;
    }
    if (norm - 1.0).abs() <= NORM_TOLERANCE {
        return Some((v.to_vec(), false));
    }
    Some((v.iter().map(|&x| (f64::from(x) / norm) as f32).collect(), true))
}

/// Decodes a payload, checking the header against the byte length.
pub fn decode_store(path: &Path, bytes: &[u8], keys: Vec<EmbeddingKey>) -> Result<EmbeddingStore> {
    if bytes.len() < HEADER_LEN {
        return Err(ArenaError::format(path, "file shorter than header"));
    }
    if bytes[..8] != EMBEDDING_MAGIC {
        return Err(ArenaError::format(path, "bad magic"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != EMBEDDING_VERSION {
        return Err(ArenaError::format(path, format!("unsupported version {version}")));
    }
    let dim = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let count = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
    let expected = (count as u128) * (dim as u128) * 4 + HEADER_LEN as u128;
    if expected != bytes.len() as u128 {
        return Err(ArenaError::format(
            path,
            format!(
                "header declares {count} rows of d={dim} ({expected} bytes) but file has {} bytes",
                bytes.len()
            ),
        ));
    }
    if keys.len() as u64 != count {
        return Err(ArenaError::format(
            path,
            format!("key index lists {} keys for {count} rows", keys.len()),
        ));
    }
    let mut store = EmbeddingStore::new(dim);
    let mut row = vec![0f32; dim];
    for (i, key) in keys.into_iter().enumerate() {
        let base = HEADER_LEN + i * dim * 4;
        for (j, x) in row.iter_mut().enumerate() {
            let at = base + j * 4;
            *x = f32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
        }
        store.insert(key, &row).map_err(|e| ArenaError::format(path, e.to_string()))?;
    }
    Ok(store)
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingStore> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| ArenaError::io(path, e))?;
    let sidecar = keys_path(path);
    let text = std::fs::read_to_string(&sidecar).map_err(|e| ArenaError::io(&sidecar, e))?;
    let index: KeyIndex =
        serde_json::from_str(&text).map_err(|e| ArenaError::format(&sidecar, e.to_string()))?;
    if index.version != EMBEDDING_VERSION {
        return Err(ArenaError::format(
            &sidecar,
            format!("unsupported key index version {}", index.version),
        ));
    }
    decode_store(path, &bytes, index.keys)
}

/// Loads several stores into one; all must share `d`.
pub fn load_embedding_set<P: AsRef<Path>>(paths: &[P]) -> Result<EmbeddingStore> {
    let mut iter = paths.iter();
    let first = iter
        .next()
        .ok_or_else(|| ArenaError::Config("no embedding stores given".into()))?;
    let mut store = load_embeddings(first)?;
    for p in iter {
        store.merge(&load_embeddings(p)?)?;
    }
    Ok(store)
}
