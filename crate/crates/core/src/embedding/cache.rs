//! Append-only embedding cache.
//!
//! Record layout (all integers little-endian):
//! `u32 model_id length | model_id bytes | u64 content hash | u32 dimension |
//! dimension x f32`.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use super::EmbeddingVector;

type Key = (String, u64);

pub struct EmbeddingCache {
    entries: RwLock<HashMap<Key, Vec<f32>>>,
    writer: Mutex<Option<BufWriter<File>>>,
    path: Option<PathBuf>,
}

impl EmbeddingCache {
    pub fn in_memory() -> Self {
        EmbeddingCache {
            entries: RwLock::new(HashMap::new()),
            writer: Mutex::new(None),
            path: None,
        }
    }

    /// Opens (or creates) a cache file and loads every complete record. A
    /// torn trailing record is cut off so later appends stay aligned.
    pub fn open(path: impl AsRef<Path>) -> io::Result<Self> {
        let path = path.as_ref();
        let mut entries = HashMap::new();
        let mut valid_len = 0u64;
        if path.exists() {
            let mut bytes = Vec::new();
            File::open(path)?.read_to_end(&mut bytes)?;
            let mut pos = 0usize;
            while let Some((key, vector, next)) = decode_record(&bytes, pos) {
                entries.insert(key, vector);
                pos = next;
            }
            if pos != bytes.len() {
                log::warn!(
                    "embedding cache {}: dropping {} trailing bytes",
                    path.display(),
                    bytes.len() - pos
                );
            }
            valid_len = pos as u64;
        }
        let file = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(path)?;
        file.set_len(valid_len)?;
        let mut writer = BufWriter::new(file);
        use std::io::Seek;
        writer.seek(io::SeekFrom::End(0))?;
        Ok(EmbeddingCache {
            entries: RwLock::new(entries),
            writer: Mutex::new(Some(writer)),
            path: Some(path.to_path_buf()),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, model_id: &str, content_hash: u64) -> Option<EmbeddingVector> {
        self.entries
            .read()
            .unwrap()
            .get(&(model_id.to_string(), content_hash))
            .map(|v| EmbeddingVector::from_raw(v.clone()))
    }

    /// Stores a vector; existing keys are left untouched.
    pub fn insert(&self, model_id: &str, content_hash: u64, vector: &EmbeddingVector) -> io::Result<()> {
        let key = (model_id.to_string(), content_hash);
        let mut entries = self.entries.write().unwrap();
        if entries.contains_key(&key) {
            return Ok(());
        }
        if let Some(writer) = self.writer.lock().unwrap().as_mut() {
            writer.write_all(&encode_record(model_id, content_hash, vector.as_slice()))?;
        }
        entries.insert(key, vector.as_slice().to_vec());
        Ok(())
    }

    pub fn flush(&self) -> io::Result<()> {
        if let Some(writer) = self.writer.lock().unwrap().as_mut() {
            writer.flush()?;
        }
        Ok(())
    }
}

impl Drop for EmbeddingCache {
    fn drop(&mut self) {
        let _ = self.flush();
    }
}

fn encode_record(model_id: &str, content_hash: u64, values: &[f32]) -> Vec<u8> {
    let mut buf = Vec::with_capacity(16 + model_id.len() + values.len() * 4);
    buf.extend_from_slice(&(model_id.len() as u32).to_le_bytes());
    buf.extend_from_slice(model_id.as_bytes());
    buf.extend_from_slice(&content_hash.to_le_bytes());
    buf.extend_from_slice(&(values.len() as u32).to_le_bytes());
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

fn take<const N: usize>(bytes: &[u8], pos: usize) -> Option<[u8; N]> {
    bytes.get(pos..pos + N)?.try_into().ok()
}

fn decode_record(bytes: &[u8], mut pos: usize) -> Option<(Key, Vec<f32>, usize)> {
    let len = u32::from_le_bytes(take::<4>(bytes, pos)?) as usize;
    pos += 4;
    let model = std::str::from_utf8(bytes.get(pos..pos + len)?).ok()?.to_string();
    pos += len;
    let hash = u64::from_le_bytes(take::<8>(bytes, pos)?);
    pos += 8;
    let dim = u32::from_le_bytes(take::<4>(bytes, pos)?) as usize;
    pos += 4;
    let raw = bytes.get(pos..pos + dim * 4)?;
    let values = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Some(((model, hash), values, pos + dim * 4))
}
