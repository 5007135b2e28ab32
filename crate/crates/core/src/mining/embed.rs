//! Text embeddings: provider trait, offline hashed embedder and a binary
//! sidecar cache keyed by `(provider_id, text hash)`.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::util::short_hash;

pub const DEFAULT_EMBEDDING_DIM: usize = 256;
const BATCH: usize = 64;
const CACHE_MAGIC: &[u8; 8] = b"MFEMB01\n";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EmbedError {
    #[error("no texts to embed")]
    EmptyInput,
    #[error("empty text for {0}")]
    EmptyText(String),
    #[error("embedding provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("embedding dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("embedding cache: {0}")]
    Cache(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub ad_id: String,
    pub values: Vec<f64>,
    pub dim: usize,
    pub provider_id: String,
}

impl EmbeddingVector {
    /// Bare vector, mostly for synthetic data and tests.
    pub fn new(ad_id: impl Into<String>, values: Vec<f64>) -> Self {
        EmbeddingVector {
            ad_id: ad_id.into(),
            dim: values.len(),
            values,
            provider_id: "raw".to_string(),
        }
    }
}

pub trait Embedder: Send + Sync {
    fn id(&self) -> &str;
    fn dim(&self) -> usize;
    /// One vector per input text, same order.
    fn embed_raw(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbedError>;
}

/// Hashed bag of character 3-grams per lowercase token, L2-normalized.
///
/// Tokens are maximal alphanumeric runs; tokens shorter than three
/// characters contribute themselves as a single gram. Grams are bucketed by
/// 64-bit FNV-1a modulo `dim`.
#[derive(Debug, Clone)]
pub struct OfflineEmbedder {
    dim: usize,
    id: String,
}

impl OfflineEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        OfflineEmbedder {
            dim,
            id: format!("offline-trigram-{dim}"),
        }
    }

    pub fn embed_one(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        let lower = text.to_lowercase();
        for token in lower.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
            let chars: Vec<char> = token.chars().collect();
            if chars.len() < 3 {
                v[bucket(token, self.dim)] += 1.0;
            } else {
                for w in chars.windows(3) {
                    let gram: String = w.iter().collect();
                    v[bucket(&gram, self.dim)] += 1.0;
                }
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

impl Default for OfflineEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_EMBEDDING_DIM)
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

fn bucket(gram: &str, dim: usize) -> usize {
    (fnv1a64(gram.as_bytes()) % dim as u64) as usize
}

impl Embedder for OfflineEmbedder {
    fn id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_raw(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbedError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

/// Embeds `(ad_id, text)` pairs. Output order matches input order.
pub fn embed_texts(
    embedder: &dyn Embedder,
    texts: &[(String, String)],
) -> Result<Vec<EmbeddingVector>, EmbedError> {
    embed_with_cache(embedder, None, texts)
}

/// As [`embed_texts`], consulting and filling `cache` when given.
pub fn embed_with_cache(
    embedder: &dyn Embedder,
    cache: Option<&mut EmbeddingCache>,
    texts: &[(String, String)],
) -> Result<Vec<EmbeddingVector>, EmbedError> {
    if texts.is_empty() {
        return Err(EmbedError::EmptyInput);
    }
    if let Some((id, _)) = texts.iter().find(|(_, t)| t.trim().is_empty()) {
        return Err(EmbedError::EmptyText(id.clone()));
    }

    let keys: Vec<String> = texts
        .iter()
        .map(|(_, t)| EmbeddingCache::key(embedder.id(), t))
        .collect();
    let mut found: Vec<Option<Vec<f64>>> = keys
        .iter()
        .map(|k| cache.as_ref().and_then(|c| c.get(k).cloned()))
        .collect();

    let missing: Vec<usize> = (0..texts.len()).filter(|&i| found[i].is_none()).collect();
    let mut fresh: Vec<(String, Vec<f64>)> = Vec::new();
    for chunk in missing.chunks(BATCH) {
        let batch: Vec<&str> = chunk.iter().map(|&i| texts[i].1.as_str()).collect();
        let vectors = embedder.embed_raw(&batch)?;
        for (&i, v) in chunk.iter().zip(vectors) {
            if v.len() != embedder.dim() {
                return Err(EmbedError::DimensionMismatch {
                    expected: embedder.dim(),
                    actual: v.len(),
                });
            }
            fresh.push((keys[i].clone(), v.clone()));
            found[i] = Some(v);
        }
    }
    if let Some(cache) = cache {
        cache.insert_all(fresh)?;
    }

    texts
        .iter()
        .zip(found)
        .map(|((ad_id, _), v)| {
            let values = v.expect("every slot filled");
            if values.iter().all(|x| *x == 0.0) {
                return Err(EmbedError::EmptyText(ad_id.clone()));
            }
            Ok(EmbeddingVector {
                ad_id: ad_id.clone(),
                dim: values.len(),
                values,
                provider_id: embedder.id().to_string(),
            })
        })
        .collect()
}

/// Append-only binary sidecar of embeddings.
///
/// Layout: 8-byte magic, then records of `u32 key_len | key | u32 dim |
/// dim × f64`, all little-endian.
#[derive(Debug)]
pub struct EmbeddingCache {
    path: PathBuf,
    entries: HashMap<String, Vec<f64>>,
}

impl EmbeddingCache {
    pub fn key(provider_id: &str, text: &str) -> String {
        format!("{provider_id}:{}", short_hash(text.as_bytes(), 32))
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self, EmbedError> {
        let path = path.as_ref().to_path_buf();
        let mut entries = HashMap::new();
        if path.exists() {
            let err = |e: std::io::Error| EmbedError::Cache(format!("{}: {e}", path.display()));
            let mut r = BufReader::new(File::open(&path).map_err(err)?);
            let mut magic = [0u8; 8];
            r.read_exact(&mut magic).map_err(err)?;
            if &magic != CACHE_MAGIC {
                return Err(EmbedError::Cache(format!("{}: bad magic", path.display())));
            }
            loop {
                let mut len = [0u8; 4];
                match r.read_exact(&mut len) {
                    Ok(()) => {}
                    Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
                    Err(e) => return Err(err(e)),
                }
                let mut key = vec![0u8; u32::from_le_bytes(len) as usize];
                r.read_exact(&mut key).map_err(err)?;
                r.read_exact(&mut len).map_err(err)?;
                let dim = u32::from_le_bytes(len) as usize;
                let mut raw = vec![0u8; dim * 8];
                r.read_exact(&mut raw).map_err(err)?;
                let values = raw
                    .chunks_exact(8)
                    .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
                    .collect();
                let key = String::from_utf8(key)
                    .map_err(|_| EmbedError::Cache(format!("{}: non-utf8 key", path.display())))?;
                entries.insert(key, values);
            }
        }
        Ok(EmbeddingCache { path, entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&Vec<f64>> {
        self.entries.get(key)
    }

    fn insert_all(&mut self, items: Vec<(String, Vec<f64>)>) -> Result<(), EmbedError> {
        let items: Vec<_> = items
            .into_iter()
            .filter(|(k, _)| !self.entries.contains_key(k))
            .collect();
        if items.is_empty() {
            return Ok(());
        }
        let err = |e: std::io::Error| EmbedError::Cache(format!("{}: {e}", self.path.display()));
        let new_file = !self.path.exists();
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(err)?;
        let mut w = BufWriter::new(file);
        if new_file {
            w.write_all(CACHE_MAGIC).map_err(err)?;
        }
        for (key, values) in &items {
            w.write_all(&(key.len() as u32).to_le_bytes()).map_err(err)?;
            w.write_all(key.as_bytes()).map_err(err)?;
            w.write_all(&(values.len() as u32).to_le_bytes()).map_err(err)?;
            for v in values {
                w.write_all(&v.to_le_bytes()).map_err(err)?;
            }
        }
        w.flush().map_err(err)?;
        for (key, values) in items {
            self.entries.insert(key, values);
        }
        Ok(())
    }
}
