//! Write-once, content-addressed embedding cache with a versioned binary
//! file format.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::RwLock;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use sha2::{Digest, Sha256};

use super::{EmbeddingError, UnitVector};

const MAGIC: &[u8; 4] = b"RTEC";
const VERSION: u16 = 1;

/// Maps content keys (hash of sanitized text + provider id) to unit vectors.
/// Entries are write-once: an existing key is never overwritten.
pub struct EmbeddingCache {
    provider_id: String,
    dim: usize,
    entries: RwLock<HashMap<[u8; 32], UnitVector>>,
}

impl EmbeddingCache {
    pub fn new(provider_id: impl Into<String>, dim: usize) -> Self {
        EmbeddingCache {
            provider_id: provider_id.into(),
            dim,
            entries: RwLock::new(HashMap::new()),
        }
    }

    pub fn provider_id(&self) -> &str {
        &self.provider_id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Content key for a sanitized text under a given provider.
    pub fn content_key(provider_id: &str, sanitized_text: &str) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update(provider_id.as_bytes());
        hasher.update([0x1f]);
        hasher.update(sanitized_text.as_bytes());
        hasher.finalize().into()
    }

    pub fn get(&self, sanitized_text: &str) -> Option<UnitVector> {
        let key = Self::content_key(&self.provider_id, sanitized_text);
        self.entries.read().unwrap().get(&key).cloned()
    }

    /// Insert unless the key already exists; returns the stored vector
    /// (the pre-existing one on a second insert).
    pub fn insert_if_absent(
        &self,
        sanitized_text: &str,
        vector: UnitVector,
    ) -> Result<UnitVector, EmbeddingError> {
        if vector.dim() != self.dim {
            return Err(EmbeddingError::DimensionMismatch {
                expected: self.dim,
                got: vector.dim(),
            });
        }
        let key = Self::content_key(&self.provider_id, sanitized_text);
        let mut entries = self.entries.write().unwrap();
        Ok(entries.entry(key).or_insert(vector).clone())
    }

    /// Persist all entries. Keys are written in sorted order so the file is
    /// deterministic for a given cache state.
    pub fn save(&self, path: &Path) -> Result<(), EmbeddingError> {
        let display = path.display().to_string();
        let io_err = |source| EmbeddingError::Io {
            path: display.clone(),
            source,
        };
        let file = File::create(path).map_err(io_err)?;
        let mut w = BufWriter::new(file);
        let entries = self.entries.read().unwrap();
        let mut keys: Vec<&[u8; 32]> = entries.keys().collect();
        keys.sort();

        w.write_all(MAGIC).map_err(io_err)?;
        w.write_u16::<LittleEndian>(VERSION).map_err(io_err)?;
        w.write_u32::<LittleEndian>(self.provider_id.len() as u32)
            .map_err(io_err)?;
        w.write_all(self.provider_id.as_bytes()).map_err(io_err)?;
        w.write_u32::<LittleEndian>(self.dim as u32).map_err(io_err)?;
        w.write_u64::<LittleEndian>(keys.len() as u64).map_err(io_err)?;
        for key in keys {
            w.write_all(key).map_err(io_err)?;
            for &v in entries[key].values() {
                w.write_f32::<LittleEndian>(v).map_err(io_err)?;
            }
        }
        w.flush().map_err(io_err)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, EmbeddingError> {
        let display = path.display().to_string();
        let io_err = |source| EmbeddingError::Io {
            path: display.clone(),
            source,
        };
        let corrupt = |message: &str| EmbeddingError::CacheFile {
            path: display.clone(),
            message: message.to_string(),
        };
        let file = File::open(path).map_err(io_err)?;
        let mut r = BufReader::new(file);

        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(io_err)?;
        if &magic != MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = r.read_u16::<LittleEndian>().map_err(io_err)?;
        if version != VERSION {
            return Err(EmbeddingError::CacheFile {
                path: display.clone(),
                message: format!("unsupported version {version} (expected {VERSION})"),
            });
        }
        let id_len = r.read_u32::<LittleEndian>().map_err(io_err)? as usize;
        if id_len > 4096 {
            return Err(corrupt("provider id length out of range"));
        }
        let mut id_bytes = vec![0u8; id_len];
        r.read_exact(&mut id_bytes).map_err(io_err)?;
        let provider_id =
            String::from_utf8(id_bytes).map_err(|_| corrupt("provider id not utf-8"))?;
        let dim = r.read_u32::<LittleEndian>().map_err(io_err)? as usize;
        if dim == 0 {
            return Err(corrupt("zero dimension"));
        }
        let count = r.read_u64::<LittleEndian>().map_err(io_err)?;

        let mut entries = HashMap::with_capacity(count as usize);
        for _ in 0..count {
            let mut key = [0u8; 32];
            r.read_exact(&mut key).map_err(io_err)?;
            let mut values = Vec::with_capacity(dim);
            for _ in 0..dim {
                values.push(r.read_f32::<LittleEndian>().map_err(io_err)?);
            }
            let vector = UnitVector::from_stored(values)
                .map_err(|_| corrupt("stored vector is not unit norm"))?;
            entries.insert(key, vector);
        }
        Ok(EmbeddingCache {
            provider_id,
            dim,
            entries: RwLock::new(entries),
        })
    }
}
