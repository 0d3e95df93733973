//! Text embedding backends, the on-disk vector cache and similarity helpers.
//!
//! Two backends are supported: a deterministic hashed bag-of-words embedder
//! that needs no network or model weights, and a remote JSON embedding
//! service. Every vector leaving this module is L2-normalized.

mod cache;
mod remote;

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use xxhash_rust::xxh3::xxh3_64_with_seed;

pub use cache::EmbeddingCache;
pub use remote::{RemoteClient, API_KEY_ENV, MAX_ATTEMPTS};

/// Seed for every stable hash in the crate. Changing it changes all hash
/// embeddings and cache keys.
pub const HASH_SEED: u64 = 0x6c6f_6769_6361_6c21;

pub const DEFAULT_DIMENSION: usize = 256;
pub const MIN_HASH_DIMENSION: usize = 16;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("cannot embed empty text (input #{0})")]
    EmptyText(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("remote embedding service returned {status}: {body}")]
    Remote { status: u16, body: String },
    #[error("remote embedding request failed: {0}")]
    Transport(String),
    #[error("invalid backend configuration: {0}")]
    InvalidSpec(String),
    #[error("embedding cache I/O: {0}")]
    Cache(#[from] std::io::Error),
}

/// A unit-length embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(Vec<f32>);

impl EmbeddingVector {
    /// Normalizes `values` to unit length. A zero vector stays zero.
    pub fn normalized(mut values: Vec<f32>) -> Self {
        let norm = values
            .iter()
            .map(|&v| f64::from(v) * f64::from(v))
            .sum::<f64>()
            .sqrt();
        if norm > 0.0 {
            for v in &mut values {
                *v = (f64::from(*v) / norm) as f32;
            }
        }
        EmbeddingVector(values)
    }

    /// Wraps values that are already unit-norm (e.g. read back from disk).
    pub fn from_raw(values: Vec<f32>) -> Self {
        EmbeddingVector(values)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        dot(&self.0, &self.0).sqrt()
    }

    pub fn into_inner(self) -> Vec<f32> {
        self.0
    }
}

/// Sequential f64-accumulated dot product; the fixed order keeps results
/// bit-identical regardless of how callers parallelize.
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| f64::from(x) * f64::from(y))
        .sum()
}

pub fn cosine(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64, EmbeddingError> {
    if u.dimension() != v.dimension() {
        return Err(EmbeddingError::DimensionMismatch {
            expected: u.dimension(),
            got: v.dimension(),
        });
    }
    Ok(dot(u.as_slice(), v.as_slice()).clamp(-1.0, 1.0))
}

/// Maps a cosine in [-1, 1] affinely onto [0, 1].
pub fn normalize_similarity(c: f64) -> f64 {
    (c + 1.0) / 2.0
}

pub fn stable_hash(bytes: &[u8]) -> u64 {
    xxh3_64_with_seed(bytes, HASH_SEED)
}

/// Lowercased alphanumeric tokens of `text`.
pub fn text_tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// Index a token lands on in a hash embedding of dimension `dimension`.
pub fn token_bucket(token: &str, dimension: usize) -> usize {
    (stable_hash(token.as_bytes()) % dimension as u64) as usize
}

/// Hashed bag-of-words embedding: token counts folded into `dimension`
/// buckets, then normalized.
pub fn hash_embed(text: &str, dimension: usize) -> Result<EmbeddingVector, EmbeddingError> {
    if dimension < MIN_HASH_DIMENSION {
        return Err(EmbeddingError::InvalidSpec(format!(
            "hash dimension must be at least {MIN_HASH_DIMENSION}, got {dimension}"
        )));
    }
    let mut counts = vec![0f32; dimension];
    let mut any = false;
    for token in text_tokens(text) {
        counts[token_bucket(&token, dimension)] += 1.0;
        any = true;
    }
    if !any {
        return Err(EmbeddingError::EmptyText(0));
    }
    Ok(EmbeddingVector::normalized(counts))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendKind {
    Hash,
    Remote {
        endpoint: String,
        /// Header carrying the API key; `Authorization` gets a `Bearer`
        /// prefix.
        auth_header: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendSpec {
    pub kind: BackendKind,
    pub model_id: String,
    pub dimension: usize,
    pub batch_size: usize,
}

impl BackendSpec {
    pub fn hash(dimension: usize) -> Self {
        BackendSpec {
            kind: BackendKind::Hash,
            model_id: format!("hash-{dimension}"),
            dimension,
            batch_size: 256,
        }
    }

    pub fn remote(endpoint: impl Into<String>, model_id: impl Into<String>, dimension: usize) -> Self {
        BackendSpec {
            kind: BackendKind::Remote {
                endpoint: endpoint.into(),
                auth_header: "Authorization".to_string(),
            },
            model_id: model_id.into(),
            dimension,
            batch_size: 64,
        }
    }

    pub fn validate(&self) -> Result<(), EmbeddingError> {
        if self.dimension == 0 {
            return Err(EmbeddingError::InvalidSpec("dimension must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(EmbeddingError::InvalidSpec("batch size must be at least 1".into()));
        }
        if self.kind == BackendKind::Hash && self.dimension < MIN_HASH_DIMENSION {
            return Err(EmbeddingError::InvalidSpec(format!(
                "hash dimension must be at least {MIN_HASH_DIMENSION}"
            )));
        }
        if self.model_id.is_empty() {
            return Err(EmbeddingError::InvalidSpec("model id must not be empty".into()));
        }
        Ok(())
    }
}

impl Default for BackendSpec {
    fn default() -> Self {
        Self::hash(DEFAULT_DIMENSION)
    }
}

/// A configured backend plus its vector cache. Cheap to share by reference
/// across threads.
pub struct Embedder {
    spec: BackendSpec,
    cache: Arc<EmbeddingCache>,
    remote: Option<RemoteClient>,
}

impl Embedder {
    /// Embedder with an in-memory cache only.
    pub fn new(spec: BackendSpec) -> Result<Self, EmbeddingError> {
        Self::with_cache(spec, Arc::new(EmbeddingCache::in_memory()))
    }

    pub fn with_cache(spec: BackendSpec, cache: Arc<EmbeddingCache>) -> Result<Self, EmbeddingError> {
        spec.validate()?;
        let remote = match &spec.kind {
            BackendKind::Hash => None,
            BackendKind::Remote {
                endpoint,
                auth_header,
            } => Some(RemoteClient::new(endpoint, auth_header, &spec.model_id)),
        };
        Ok(Embedder {
            spec,
            cache,
            remote,
        })
    }

    /// Overrides the initial retry backoff of a remote backend.
    pub fn with_retry_backoff(mut self, backoff: std::time::Duration) -> Self {
        self.remote = self.remote.map(|r| r.with_initial_backoff(backoff));
        self
    }

    pub fn spec(&self) -> &BackendSpec {
        &self.spec
    }

    pub fn cache(&self) -> &EmbeddingCache {
        &self.cache
    }

    pub fn embed(&self, text: &str) -> Result<EmbeddingVector, EmbeddingError> {
        Ok(self.embed_batch(&[text])?.pop().expect("one text in, one vector out"))
    }

    /// Embeds `texts` in order. Cached vectors are reused; the rest are
    /// computed (remote batches run concurrently) and then cached.
    pub fn embed_batch<S: AsRef<str> + Sync>(
        &self,
        texts: &[S],
    ) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
        if let Some(i) = texts.iter().position(|t| t.as_ref().trim().is_empty()) {
            return Err(EmbeddingError::EmptyText(i));
        }
        let model = &self.spec.model_id;
        let hashes: Vec<u64> = texts
            .iter()
            .map(|t| stable_hash(t.as_ref().as_bytes()))
            .collect();
        let mut out: Vec<Option<EmbeddingVector>> =
            hashes.iter().map(|&h| self.cache.get(model, h)).collect();

        // Unique misses, first occurrence wins.
        let mut missing: Vec<usize> = Vec::new();
        for (i, slot) in out.iter().enumerate() {
            if slot.is_none() && !missing.iter().any(|&j| hashes[j] == hashes[i]) {
                missing.push(i);
            }
        }
        if !missing.is_empty() {
            let miss_texts: Vec<&str> = missing.iter().map(|&i| texts[i].as_ref()).collect();
            let computed = self.compute(&miss_texts).map_err(|e| match e {
                EmbeddingError::EmptyText(j) => EmbeddingError::EmptyText(missing[j]),
                other => other,
            })?;
            for (&i, vector) in missing.iter().zip(computed) {
                if vector.dimension() != self.spec.dimension {
                    return Err(EmbeddingError::DimensionMismatch {
                        expected: self.spec.dimension,
                        got: vector.dimension(),
                    });
                }
                self.cache.insert(model, hashes[i], &vector)?;
            }
            self.cache.flush()?;
            for (i, slot) in out.iter_mut().enumerate() {
                if slot.is_none() {
                    *slot = self.cache.get(model, hashes[i]);
                }
            }
        }
        Ok(out
            .into_iter()
            .map(|v| v.expect("every text resolved"))
            .collect())
    }

    fn compute(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
        match &self.remote {
            None => texts
                .par_iter()
                .enumerate()
                .map(|(i, t)| {
                    hash_embed(t, self.spec.dimension).map_err(|e| match e {
                        EmbeddingError::EmptyText(_) => EmbeddingError::EmptyText(i),
                        other => other,
                    })
                })
                .collect(),
            Some(client) => {
                let batches: Vec<Vec<EmbeddingVector>> = texts
                    .par_chunks(self.spec.batch_size)
                    .map(|chunk| client.embed(chunk, self.spec.dimension))
                    .collect::<Result<_, _>>()?;
                Ok(batches.into_iter().flatten().collect())
            }
        }
    }
}
