//! On-disk benchmark bundles.
//!
//! A bundle directory holds `corpus.jsonl`, `queries.tsv` (`qid<TAB>query`),
//! `qrels.tsv` and `manifest.json`, which records each query's template
//! pattern, negation count and private document pool.

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{EvalError, Qrels};
use crate::index::{Corpus, IndexError};
use crate::query::{parse_str, read_query_lines, render, QueryError, QueryExpr};
use crate::synth::SynthCase;

pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const QUERIES_FILE: &str = "queries.tsv";
pub const QRELS_FILE: &str = "qrels.tsv";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum BundleError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error("query {qid}: {source}")]
    Query { qid: String, source: QueryError },
    #[error("query {0} is listed in the manifest but missing from the bundle")]
    Inconsistent(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestCase {
    pub qid: String,
    pub pattern: String,
    pub negation_count: usize,
    pub doc_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    /// `templates` or `chains-and` / `chains-or`.
    pub kind: String,
    pub seed: u64,
    /// Embedding dimension the vocabulary was made collision-free for.
    pub dimension: usize,
    pub cases: Vec<ManifestCase>,
}

impl Manifest {
    pub fn case(&self, qid: &str) -> Option<&ManifestCase> {
        self.cases.iter().find(|c| c.qid == qid)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, BundleError> {
        Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
    }
}

pub fn write_bundle(
    dir: impl AsRef<Path>,
    cases: &[SynthCase],
    kind: &str,
    seed: u64,
    dimension: usize,
) -> Result<(), BundleError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;

    let corpus = Corpus::new(cases.iter().flat_map(|c| c.documents.iter().cloned()).collect())?;
    let mut w = BufWriter::new(File::create(dir.join(CORPUS_FILE))?);
    corpus.write_jsonl(&mut w)?;
    w.flush()?;

    let mut w = BufWriter::new(File::create(dir.join(QUERIES_FILE))?);
    for case in cases {
        writeln!(w, "{}\t{}", case.qid, render(&case.query))?;
    }
    w.flush()?;

    let mut w = BufWriter::new(File::create(dir.join(QRELS_FILE))?);
    Qrels::from_cases(cases).write(&mut w)?;
    w.flush()?;

    let manifest = Manifest {
        kind: kind.to_string(),
        seed,
        dimension,
        cases: cases
            .iter()
            .map(|c| ManifestCase {
                qid: c.qid.clone(),
                pattern: c.pattern.clone(),
                negation_count: c.negation_count,
                doc_ids: c.documents.iter().map(|d| d.id.clone()).collect(),
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    std::fs::write(dir.join(MANIFEST_FILE), text)?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Bundle {
    pub corpus: Corpus,
    pub queries: Vec<(String, QueryExpr)>,
    pub qrels: Qrels,
    pub manifest: Manifest,
}

impl Bundle {
    pub fn read(dir: impl AsRef<Path>) -> Result<Self, BundleError> {
        let dir = dir.as_ref();
        let corpus = Corpus::read_jsonl(BufReader::new(File::open(dir.join(CORPUS_FILE))?))?;
        let queries = read_query_lines(&std::fs::read_to_string(dir.join(QUERIES_FILE))?)
            .into_iter()
            .map(|(qid, text)| match parse_str(&text) {
                Ok(expr) => Ok((qid, expr)),
                Err(source) => Err(BundleError::Query { qid, source }),
            })
            .collect::<Result<_, _>>()?;
        let qrels = Qrels::read(BufReader::new(File::open(dir.join(QRELS_FILE))?))?;
        let manifest = Manifest::load(dir.join(MANIFEST_FILE))?;
        Ok(Bundle {
            corpus,
            queries,
            qrels,
            manifest,
        })
    }

    /// Reassembles the cases in manifest order.
    pub fn cases(&self) -> Result<Vec<SynthCase>, BundleError> {
        let queries: HashMap<&str, &QueryExpr> = self.queries.iter().map(|(q, e)| (q.as_str(), e)).collect();
        let docs: HashMap<&str, _> = self.corpus.documents.iter().map(|d| (d.id.as_str(), d)).collect();
        self.manifest
            .cases
            .iter()
            .map(|mc| {
                let missing = || BundleError::Inconsistent(mc.qid.clone());
                let query = (*queries.get(mc.qid.as_str()).ok_or_else(missing)?).clone();
                let documents = mc
                    .doc_ids
                    .iter()
                    .map(|id| docs.get(id.as_str()).map(|d| (*d).clone()).ok_or_else(missing))
                    .collect::<Result<_, _>>()?;
                Ok(SynthCase {
                    qid: mc.qid.clone(),
                    query,
                    pattern: mc.pattern.clone(),
                    negation_count: mc.negation_count,
                    documents,
                    qrels: self.qrels.get(&mc.qid).cloned().unwrap_or_default(),
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{enumerate_templates, generate_suite, Vocabulary};

    #[test]
    fn bundle_round_trip() {
        let vocab = Vocabulary::generate(12, 3, 256, 2).unwrap();
        let cases = generate_suite(&enumerate_templates()[..4], &vocab, 2, 8).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_bundle(dir.path(), &cases, "templates", 8, 256).unwrap();
        let bundle = Bundle::read(dir.path()).unwrap();
        assert_eq!(bundle.cases().unwrap(), cases);
        assert_eq!(bundle.manifest.case(&cases[0].qid).unwrap().doc_ids.len(), cases[0].documents.len());

        let again = tempfile::tempdir().unwrap();
        write_bundle(again.path(), &cases, "templates", 8, 256).unwrap();
        for f in [CORPUS_FILE, QUERIES_FILE, QRELS_FILE, MANIFEST_FILE] {
            assert_eq!(
                std::fs::read(dir.path().join(f)).unwrap(),
                std::fs::read(again.path().join(f)).unwrap()
            );
        }
    }
}
