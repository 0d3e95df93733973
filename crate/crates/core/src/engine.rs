//! Baseline dense retrieval and logical (composed-score) retrieval.

use std::collections::HashMap;
use std::io::{self, Write};
use std::process::{Command, Stdio};
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{evaluate_with, AlgebraError, OperatorConfig};
use crate::embedding::{normalize_similarity, Embedder, EmbeddingError};
use crate::index::{top_k, EmbeddedIndex, IndexError, RankedDoc};
use crate::query::{parse_str, terms, QueryError, QueryExpr};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error("question must not be empty")]
    EmptyQuestion,
    #[error("reformulator exited with {code:?}: {stderr}")]
    ReformulatorFailed { code: Option<i32>, stderr: String },
    #[error("reformulator I/O: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub query_id: String,
    pub entries: Vec<RankedDoc>,
}

impl RankedList {
    /// Writes `qid Q0 docid rank score tag` lines.
    pub fn write_run(&self, tag: &str, mut w: impl Write) -> io::Result<()> {
        for e in &self.entries {
            writeln!(w, "{} Q0 {} {} {:.8} {}", self.query_id, e.doc_id, e.rank, e.score, tag)?;
        }
        Ok(())
    }

    pub fn doc_ids(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.doc_id.as_str()).collect()
    }
}

/// Normalized per-term scores over every document of an index.
#[derive(Debug, Clone, PartialEq)]
pub struct TermScoreMatrix {
    pub terms: Vec<String>,
    /// `rows[t][d]`: score of term `t` against document `d`.
    pub rows: Vec<Arc<Vec<f64>>>,
}

impl TermScoreMatrix {
    pub fn term_row(&self, term: &str) -> Option<&[f64]> {
        self.terms
            .iter()
            .position(|t| t == term)
            .map(|i| self.rows[i].as_slice())
    }

    /// Scores of document `doc` for each term, as a lookup closure.
    pub fn column(&self, doc: usize) -> impl Fn(&str) -> Option<f64> + '_ {
        move |term| {
            self.terms
                .iter()
                .position(|t| t == term)
                .map(|i| self.rows[i][doc])
        }
    }

    /// Applies `f(term, score)` to every entry.
    pub fn map_scores(&self, f: impl Fn(&str, f64) -> f64 + Sync) -> TermScoreMatrix {
        let rows = self
            .terms
            .iter()
            .zip(&self.rows)
            .map(|(term, row)| Arc::new(row.iter().map(|&s| f(term, s)).collect()))
            .collect();
        TermScoreMatrix {
            terms: self.terms.clone(),
            rows,
        }
    }
}

/// Runs queries against one immutable index. Term score rows are memoized,
/// so a term shared by many queries is embedded and scored once.
pub struct Retriever<'a> {
    index: &'a EmbeddedIndex,
    embedder: &'a Embedder,
    normalize: bool,
    memo: Mutex<HashMap<String, Arc<Vec<f64>>>>,
}

impl<'a> Retriever<'a> {
    pub fn new(index: &'a EmbeddedIndex, embedder: &'a Embedder) -> Self {
        Retriever {
            index,
            embedder,
            normalize: true,
            memo: Mutex::new(HashMap::new()),
        }
    }

    /// Disables the (c + 1) / 2 mapping; term scores become raw cosines.
    pub fn without_normalization(mut self) -> Self {
        self.normalize = false;
        self
    }

    pub fn index(&self) -> &EmbeddedIndex {
        self.index
    }

    /// Embeds the question as-is and ranks by raw cosine.
    pub fn baseline_retrieve(&self, query_id: &str, question: &str, k: usize) -> Result<RankedList, EngineError> {
        if question.trim().is_empty() {
            return Err(EngineError::EmptyQuestion);
        }
        let q = self.embedder.embed(question)?;
        let scores = self.index.score_all(&q)?;
        Ok(RankedList {
            query_id: query_id.to_string(),
            entries: top_k(&scores, k),
        })
    }

    pub fn term_scores(&self, expr: &QueryExpr) -> Result<TermScoreMatrix, EngineError> {
        let terms = terms(expr);
        let missing: Vec<&String> = {
            let memo = self.memo.lock().unwrap();
            terms.iter().filter(|t| !memo.contains_key(*t)).collect()
        };
        if !missing.is_empty() {
            let vectors = self.embedder.embed_batch(&missing)?;
            let rows: Vec<Vec<f64>> = vectors
                .par_iter()
                .map(|v| {
                    let cosines = self.index.cosines(v)?;
                    Ok(if self.normalize {
                        cosines.into_iter().map(normalize_similarity).collect()
                    } else {
                        cosines
                    })
                })
                .collect::<Result<_, IndexError>>()?;
            let mut memo = self.memo.lock().unwrap();
            for (term, row) in missing.into_iter().zip(rows) {
                memo.entry(term.clone()).or_insert_with(|| Arc::new(row));
            }
        }
        let memo = self.memo.lock().unwrap();
        let rows = terms.iter().map(|t| Arc::clone(&memo[t])).collect();
        Ok(TermScoreMatrix { terms, rows })
    }

    pub fn logical_retrieve(
        &self,
        query_id: &str,
        expr: &QueryExpr,
        config: &OperatorConfig,
        k: usize,
    ) -> Result<RankedList, EngineError> {
        let matrix = self.term_scores(expr)?;
        self.rank_matrix(query_id, expr, &matrix, config, k)
    }

    /// Composes `matrix` through `expr` and ranks the documents.
    pub fn rank_matrix(
        &self,
        query_id: &str,
        expr: &QueryExpr,
        matrix: &TermScoreMatrix,
        config: &OperatorConfig,
        k: usize,
    ) -> Result<RankedList, EngineError> {
        let composite = compose(expr, matrix, config, self.index.len())?;
        let scores: Vec<(String, f64)> = self.index.ids().iter().cloned().zip(composite).collect();
        Ok(RankedList {
            query_id: query_id.to_string(),
            entries: top_k(&scores, k),
        })
    }
}

/// Composite score of every document.
pub fn compose(
    expr: &QueryExpr,
    matrix: &TermScoreMatrix,
    config: &OperatorConfig,
    n_docs: usize,
) -> Result<Vec<f64>, AlgebraError> {
    (0..n_docs)
        .into_par_iter()
        .map(|d| evaluate_with(expr, config, &matrix.column(d)))
        .collect()
}

/// Runs `command` through `sh -c`, feeding `question` on stdin, and parses
/// its stdout as a logical query.
pub fn external_reformulate(question: &str, command: &str) -> Result<QueryExpr, EngineError> {
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(command)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()?;
    {
        let mut stdin = child.stdin.take().expect("piped stdin");
        // The command may exit without reading; a broken pipe is not ours to report.
        if let Err(e) = stdin.write_all(question.as_bytes()) {
            if e.kind() != io::ErrorKind::BrokenPipe {
                return Err(e.into());
            }
        }
    }
    let output = child.wait_with_output()?;
    if !output.status.success() {
        return Err(EngineError::ReformulatorFailed {
            code: output.status.code(),
            stderr: String::from_utf8_lossy(&output.stderr).trim().to_string(),
        });
    }
    let text = String::from_utf8_lossy(&output.stdout);
    Ok(parse_str(text.trim())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{cosine, hash_embed, BackendSpec};
    use crate::index::{build_index, Corpus, Document};

    fn setup(docs: &[(&str, &str)]) -> (EmbeddedIndex, Embedder) {
        let embedder = Embedder::new(BackendSpec::hash(256)).unwrap();
        let corpus = Corpus::new(docs.iter().map(|(id, t)| Document::new(*id, *t)).collect()).unwrap();
        (build_index(&corpus, &embedder).unwrap(), embedder)
    }

    #[test]
    fn baseline_self_similarity() {
        let (index, embedder) = setup(&[("d1", "red apple pie"), ("d2", "blue ocean wave")]);
        let r = Retriever::new(&index, &embedder);
        let ranked = r.baseline_retrieve("q", "blue ocean wave", 10).unwrap();
        assert_eq!(ranked.entries[0].doc_id, "d2");
        assert!((ranked.entries[0].score - 1.0).abs() < 1e-6);
        assert_eq!(r.baseline_retrieve("q", "anything", 1).unwrap().entries.len(), 1);
        assert!(matches!(
            r.baseline_retrieve("q", "  ", 1),
            Err(EngineError::EmptyQuestion)
        ));
    }

    #[test]
    fn baseline_shared_token_wins() {
        let (index, embedder) = setup(&[("d1", "apple pie"), ("d2", "ocean wave"), ("d3", "stone wall")]);
        // oracle: the only doc with a nonzero cosine is the one sharing "wave"
        let q = hash_embed("wave crash", 256).unwrap();
        for (id, text) in [("d1", "apple pie"), ("d3", "stone wall")] {
            assert_eq!(cosine(&q, &hash_embed(text, 256).unwrap()).unwrap(), 0.0, "{id}");
        }
        let r = Retriever::new(&index, &embedder);
        assert_eq!(r.baseline_retrieve("q", "wave crash", 3).unwrap().entries[0].doc_id, "d2");
    }

    #[test]
    fn logical_negation_ranks_pure_doc_first() {
        let (index, embedder) = setup(&[("d1", "dog dog"), ("d2", "dog cat")]);
        // by hand: d1 = (1+1)/2 * (1 - 1/2) = 0.5; d2 = (1+1/sqrt2)/2 * (1 - (1+1/sqrt2)/2)
        let s = (1.0 + std::f64::consts::FRAC_1_SQRT_2) / 2.0;
        let expected_d2 = s * (1.0 - s);
        let r = Retriever::new(&index, &embedder);
        let expr = parse_str(r#""dog" AND NOT "cat""#).unwrap();
        let ranked = r.logical_retrieve("q", &expr, &OperatorConfig::default(), 10).unwrap();
        assert_eq!(ranked.doc_ids(), ["d1", "d2"]);
        assert!((ranked.entries[0].score - 0.5).abs() < 1e-6);
        assert!((ranked.entries[1].score - expected_d2).abs() < 1e-6);
    }

    #[test]
    fn single_term_matches_baseline_ranking() {
        let (index, embedder) = setup(&[
            ("a", "dog cat"),
            ("b", "dog"),
            ("c", "cat mouse"),
            ("d", "giraffe"),
            ("e", "dog mouse giraffe"),
        ]);
        let r = Retriever::new(&index, &embedder);
        let base = r.baseline_retrieve("q", "dog", 10).unwrap();
        let logical = r
            .logical_retrieve("q", &QueryExpr::term("dog"), &OperatorConfig::default(), 10)
            .unwrap();
        assert_eq!(base.doc_ids(), logical.doc_ids());
    }

    #[test]
    fn negated_full_text_gets_minimum() {
        let (index, embedder) = setup(&[("d1", "alpha beta"), ("d2", "alpha gamma")]);
        let r = Retriever::new(&index, &embedder);
        let expr = parse_str(r#""alpha" AND NOT "alpha gamma""#).unwrap();
        let ranked = r.logical_retrieve("q", &expr, &OperatorConfig::default(), 10).unwrap();
        assert_eq!(ranked.entries.last().unwrap().doc_id, "d2");
        assert!(ranked.entries.last().unwrap().score.abs() < 1e-6);
    }

    #[test]
    fn memo_and_parallel_equivalence() {
        let docs: Vec<(String, String)> = (0..50)
            .map(|i| (format!("d{i:02}"), format!("w{} w{} w{}", i % 7, i % 5, i % 3)))
            .collect();
        let borrowed: Vec<(&str, &str)> = docs.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        let (index, embedder) = setup(&borrowed);
        let expr = parse_str("w1 AND NOT w2 OR w3 AND w4").unwrap();
        let run = |threads| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| Retriever::new(&index, &embedder).term_scores(&expr).unwrap())
        };
        let serial = run(1);
        let parallel = run(4);
        for (a, b) in serial.rows.iter().zip(&parallel.rows) {
            let bits = |r: &Vec<f64>| r.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a), bits(b));
        }
        let r = Retriever::new(&index, &embedder);
        let first = r.term_scores(&expr).unwrap();
        let again = r.term_scores(&expr).unwrap();
        assert!(Arc::ptr_eq(&first.rows[0], &again.rows[0]));
    }

    #[test]
    fn run_lines() {
        let list = RankedList {
            query_id: "q1".into(),
            entries: vec![RankedDoc {
                doc_id: "d1".into(),
                score: 0.5,
                rank: 1,
            }],
        };
        let mut out = Vec::new();
        list.write_run("baseline", &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "q1 Q0 d1 1 0.50000000 baseline\n");
    }

    #[test]
    fn reformulator_hook() {
        let expr = external_reformulate("ignored", r#"echo '"a" AND NOT "b"'"#).unwrap();
        assert_eq!(expr, parse_str(r#""a" AND NOT "b""#).unwrap());
        let upper = external_reformulate("dogs", "tr a-z A-Z | sed 's/.*/\"&\"/'").unwrap();
        assert_eq!(upper, QueryExpr::term("DOGS"));
        assert!(matches!(
            external_reformulate("q", "exit 3"),
            Err(EngineError::ReformulatorFailed { code: Some(3), .. })
        ));
        assert!(matches!(
            external_reformulate("q", "echo '\"a\" AND'"),
            Err(EngineError::Query(_))
        ));
    }
}
