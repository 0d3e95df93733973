//! Corpus ingestion and the dense, brute-force embedded index.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{dot, Embedder, EmbeddingError, EmbeddingVector};

/// Documents embedded per checkpoint while building an index.
pub const CHECKPOINT_EVERY: usize = 1000;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate document id {0:?}")]
    DuplicateId(String),
    #[error("corrupt index: {0}")]
    CorruptIndex(String),
    #[error("dimension mismatch: index has {expected}, query has {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("unknown document id {0:?}")]
    UnknownId(String),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, String>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Document {
            id: id.into(),
            text: text.into(),
            metadata: BTreeMap::new(),
        }
    }
}

#[derive(Deserialize)]
struct CorpusRecord {
    #[serde(rename = "_id")]
    id: String,
    text: String,
    #[serde(default)]
    title: Option<String>,
    #[serde(default)]
    metadata: BTreeMap<String, String>,
}

#[derive(Serialize)]
struct CorpusRecordOut<'a> {
    #[serde(rename = "_id")]
    id: &'a str,
    text: &'a str,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    metadata: &'a BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub documents: Vec<Document>,
}

impl Corpus {
    pub fn new(documents: Vec<Document>) -> Result<Self, IndexError> {
        let mut seen = HashSet::new();
        for doc in &documents {
            if !seen.insert(doc.id.as_str()) {
                return Err(IndexError::DuplicateId(doc.id.clone()));
            }
        }
        Ok(Corpus { documents })
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    /// Reads newline-delimited JSON records `{"_id", "text", "title"?}`.
    /// A title is prepended as `"title. text"`. Blank lines are skipped.
    pub fn read_jsonl(reader: impl BufRead) -> Result<Self, IndexError> {
        let mut documents = Vec::new();
        let mut seen = HashSet::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let record: CorpusRecord = serde_json::from_str(&line).map_err(|e| IndexError::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
            if record.id.is_empty() || record.id.contains(char::is_whitespace) {
                return Err(IndexError::Parse {
                    line: line_no,
                    message: format!("\"_id\" must be non-empty without whitespace, got {:?}", record.id),
                });
            }
            let text = match record.title {
                Some(title) if !title.trim().is_empty() => format!("{title}. {}", record.text),
                _ => record.text,
            };
            if text.trim().is_empty() {
                return Err(IndexError::Parse {
                    line: line_no,
                    message: "empty \"text\"".into(),
                });
            }
            if !seen.insert(record.id.clone()) {
                return Err(IndexError::DuplicateId(record.id));
            }
            documents.push(Document {
                id: record.id,
                text,
                metadata: record.metadata,
            });
        }
        Ok(Corpus { documents })
    }

    pub fn write_jsonl(&self, mut writer: impl Write) -> io::Result<()> {
        for doc in &self.documents {
            let record = CorpusRecordOut {
                id: &doc.id,
                text: &doc.text,
                metadata: &doc.metadata,
            };
            serde_json::to_writer(&mut writer, &record)?;
            writer.write_all(b"\n")?;
        }
        Ok(())
    }
}

pub fn ingest(path: impl AsRef<Path>) -> Result<Corpus, IndexError> {
    Corpus::read_jsonl(BufReader::new(File::open(path)?))
}

#[derive(Serialize, Deserialize)]
struct IndexHeader {
    model_id: String,
    dimension: usize,
    count: usize,
}

/// Row-major matrix of unit-norm document embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedIndex {
    ids: Vec<String>,
    matrix: Vec<f32>,
    model_id: String,
    dimension: usize,
}

impl EmbeddedIndex {
    pub fn from_rows(
        model_id: impl Into<String>,
        dimension: usize,
        rows: Vec<(String, EmbeddingVector)>,
    ) -> Result<Self, IndexError> {
        let mut ids = Vec::with_capacity(rows.len());
        let mut matrix = Vec::with_capacity(rows.len() * dimension);
        let mut seen = HashSet::new();
        for (id, vector) in rows {
            if vector.dimension() != dimension {
                return Err(IndexError::DimensionMismatch {
                    expected: dimension,
                    got: vector.dimension(),
                });
            }
            if !seen.insert(id.clone()) {
                return Err(IndexError::DuplicateId(id));
            }
            ids.push(id);
            matrix.extend_from_slice(vector.as_slice());
        }
        Ok(EmbeddedIndex {
            ids,
            matrix,
            model_id: model_id.into(),
            dimension,
        })
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.matrix[i * self.dimension..(i + 1) * self.dimension]
    }

    /// A new index holding only `ids`, in the given order.
    pub fn subset<S: AsRef<str>>(&self, ids: &[S]) -> Result<Self, IndexError> {
        let position: std::collections::HashMap<&str, usize> = self
            .ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        let mut out_ids = Vec::with_capacity(ids.len());
        let mut matrix = Vec::with_capacity(ids.len() * self.dimension);
        for id in ids {
            let &i = position
                .get(id.as_ref())
                .ok_or_else(|| IndexError::UnknownId(id.as_ref().to_string()))?;
            out_ids.push(self.ids[i].clone());
            matrix.extend_from_slice(self.row(i));
        }
        Ok(EmbeddedIndex {
            ids: out_ids,
            matrix,
            model_id: self.model_id.clone(),
            dimension: self.dimension,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), IndexError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    /// Header JSON line, raw little-endian f32 block, then one id per line.
    pub fn write_to(&self, mut w: impl Write) -> Result<(), IndexError> {
        let header = IndexHeader {
            model_id: self.model_id.clone(),
            dimension: self.dimension,
            count: self.ids.len(),
        };
        serde_json::to_writer(&mut w, &header).map_err(io::Error::from)?;
        w.write_all(b"\n")?;
        for v in &self.matrix {
            w.write_all(&v.to_le_bytes())?;
        }
        for id in &self.ids {
            w.write_all(id.as_bytes())?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, IndexError> {
        Self::read_from(BufReader::new(File::open(path)?))
    }

    pub fn read_from(mut r: impl BufRead) -> Result<Self, IndexError> {
        let corrupt = |msg: String| IndexError::CorruptIndex(msg);
        let mut header_line = String::new();
        r.read_line(&mut header_line)?;
        let header: IndexHeader = serde_json::from_str(header_line.trim_end())
            .map_err(|e| corrupt(format!("bad header: {e}")))?;
        let floats = header
            .count
            .checked_mul(header.dimension)
            .ok_or_else(|| corrupt("header size overflow".into()))?;
        let mut raw = vec![0u8; floats * 4];
        r.read_exact(&mut raw).map_err(|e| {
            if e.kind() == io::ErrorKind::UnexpectedEof {
                corrupt(format!("float block truncated, expected {} bytes", floats * 4))
            } else {
                IndexError::Io(e)
            }
        })?;
        let matrix = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let mut rest = String::new();
        r.read_to_string(&mut rest)
            .map_err(|e| corrupt(format!("id block: {e}")))?;
        let ids: Vec<String> = rest.lines().map(str::to_string).collect();
        if ids.len() != header.count {
            return Err(corrupt(format!(
                "header declares {} documents, found {} ids",
                header.count,
                ids.len()
            )));
        }
        Ok(EmbeddedIndex {
            ids,
            matrix,
            model_id: header.model_id,
            dimension: header.dimension,
        })
    }

    /// Raw cosine of `query` against every document, in index order.
    pub fn score_all(&self, query: &EmbeddingVector) -> Result<Vec<(String, f64)>, IndexError> {
        Ok(self
            .ids
            .iter()
            .cloned()
            .zip(self.cosines(query)?)
            .collect())
    }

    /// Like [`EmbeddedIndex::score_all`] without the ids.
    pub fn cosines(&self, query: &EmbeddingVector) -> Result<Vec<f64>, IndexError> {
        if query.dimension() != self.dimension {
            return Err(IndexError::DimensionMismatch {
                expected: self.dimension,
                got: query.dimension(),
            });
        }
        if self.ids.is_empty() {
            return Ok(Vec::new());
        }
        let q = query.as_slice();
        Ok(self
            .matrix
            .par_chunks(self.dimension)
            .map(|row| dot(row, q).clamp(-1.0, 1.0))
            .collect())
    }
}

/// Embeds the corpus in order, [`CHECKPOINT_EVERY`] documents at a time.
/// Each chunk lands in the embedder's cache before the next starts, so a
/// failed build resumes from the last finished chunk.
pub fn build_index(corpus: &Corpus, embedder: &Embedder) -> Result<EmbeddedIndex, IndexError> {
    build_index_with_progress(corpus, embedder, |_| {})
}

pub fn build_index_with_progress(
    corpus: &Corpus,
    embedder: &Embedder,
    mut progress: impl FnMut(usize),
) -> Result<EmbeddedIndex, IndexError> {
    if corpus.is_empty() {
        return Err(IndexError::EmptyCorpus);
    }
    let spec = embedder.spec();
    let mut rows = Vec::with_capacity(corpus.len());
    for chunk in corpus.documents.chunks(CHECKPOINT_EVERY) {
        let texts: Vec<&str> = chunk.iter().map(|d| d.text.as_str()).collect();
        let vectors = embedder.embed_batch(&texts)?;
        rows.extend(chunk.iter().map(|d| d.id.clone()).zip(vectors));
        progress(rows.len());
    }
    EmbeddedIndex::from_rows(spec.model_id.clone(), spec.dimension, rows)
}

/// A ranked result: document id, score, 1-based rank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedDoc {
    pub doc_id: String,
    pub score: f64,
    pub rank: usize,
}

/// Sorts descending by score, ties broken by ascending id, and keeps the
/// first `k`.
pub fn top_k(scores: &[(String, f64)], k: usize) -> Vec<RankedDoc> {
    let mut order: Vec<&(String, f64)> = scores.iter().collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    order
        .into_iter()
        .take(k)
        .enumerate()
        .map(|(i, (id, score))| RankedDoc {
            doc_id: id.clone(),
            score: *score,
            rank: i + 1,
        })
        .collect()
}
