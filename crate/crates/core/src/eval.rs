//! nDCG@10 evaluation and the experiment tables built on it: method
//! comparison by negation count, the operator ablation grid, chain-length
//! scaling curves and the random-score baseline.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{self, BufRead, Write};
use std::ops::RangeInclusive;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{AndOp, NotOp, OperatorConfig, OrOp};
use crate::bundle::Manifest;
use crate::calibration::{calibrated_retrieve, CalibrationStore};
use crate::embedding::Embedder;
use crate::engine::{EngineError, RankedList, Retriever};
use crate::index::{build_index, Corpus, EmbeddedIndex, IndexError};
use crate::query::render;
use crate::synth::{chain_suite, Connective, SynthCase, SynthError, Vocabulary};

pub const NDCG_K: usize = 10;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("run references query {0:?} absent from qrels")]
    UnknownQuery(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Graded relevance of documents for one query; absent documents are 0.
pub type Judgments = BTreeMap<String, u32>;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Qrels {
    pub queries: BTreeMap<String, Judgments>,
}

impl Qrels {
    pub fn from_cases(cases: &[SynthCase]) -> Self {
        Qrels {
            queries: cases.iter().map(|c| (c.qid.clone(), c.qrels.clone())).collect(),
        }
    }

    pub fn insert(&mut self, qid: impl Into<String>, doc_id: impl Into<String>, relevance: u32) {
        self.queries
            .entry(qid.into())
            .or_default()
            .insert(doc_id.into(), relevance);
    }

    pub fn get(&self, qid: &str) -> Option<&Judgments> {
        self.queries.get(qid)
    }

    /// Reads `qid<TAB>docid<TAB>rel` lines. The four-column TREC layout
    /// `qid iter docid rel` is accepted as well.
    pub fn read(reader: impl BufRead) -> Result<Self, EvalError> {
        let mut qrels = Qrels::default();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            let (qid, doc, rel) = match fields.as_slice() {
                [] => continue,
                [q, d, r] | [q, _, d, r] => (*q, *d, *r),
                _ => {
                    return Err(EvalError::Parse {
                        line: i + 1,
                        message: format!("expected qid, docid, relevance; got {line:?}"),
                    })
                }
            };
            let rel: u32 = rel.parse().map_err(|_| EvalError::Parse {
                line: i + 1,
                message: format!("relevance must be a non-negative integer, got {rel:?}"),
            })?;
            qrels.insert(qid, doc, rel);
        }
        Ok(qrels)
    }

    pub fn write(&self, mut w: impl Write) -> io::Result<()> {
        for (qid, docs) in &self.queries {
            for (doc, rel) in docs {
                writeln!(w, "{qid}\t{doc}\t{rel}")?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Ndcg {
    pub value: f64,
    /// The query has no relevant documents; `value` is then 0.
    pub no_relevant: bool,
}

fn dcg(gains: impl Iterator<Item = u32>, k: usize) -> f64 {
    gains
        .take(k)
        .enumerate()
        .map(|(i, g)| g as f64 / ((i + 2) as f64).log2())
        .sum()
}

/// Linear gain, log2 discount; the ideal ordering is taken over every
/// judged-relevant document, retrieved or not.
pub fn ndcg_at_k<S: AsRef<str>>(ranking: &[S], judgments: &Judgments, k: usize) -> Ndcg {
    let mut ideal: Vec<u32> = judgments.values().copied().filter(|&r| r > 0).collect();
    if ideal.is_empty() {
        return Ndcg {
            value: 0.0,
            no_relevant: true,
        };
    }
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg = dcg(ideal.into_iter(), k);
    let value = if idcg > 0.0 {
        dcg(
            ranking
                .iter()
                .map(|id| judgments.get(id.as_ref()).copied().unwrap_or(0)),
            k,
        ) / idcg
    } else {
        0.0
    };
    Ndcg {
        value,
        no_relevant: false,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLine {
    pub qid: String,
    pub doc_id: String,
    pub rank: usize,
    pub score: f64,
    pub tag: String,
}

/// Reads `qid Q0 docid rank score tag` lines; lines starting with `#` are
/// skipped.
pub fn read_run(reader: impl BufRead) -> Result<Vec<RunLine>, EvalError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| EvalError::Parse { line: i + 1, message };
        let [qid, _, doc, rank, score, tag] = fields.as_slice() else {
            return Err(err(format!("expected 6 fields, got {}", fields.len())));
        };
        out.push(RunLine {
            qid: qid.to_string(),
            doc_id: doc.to_string(),
            rank: rank.parse().map_err(|_| err(format!("bad rank {rank:?}")))?,
            score: score.parse().map_err(|_| err(format!("bad score {score:?}")))?,
            tag: tag.to_string(),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryEval {
    pub qid: String,
    pub method: String,
    pub ndcg: f64,
    pub no_relevant: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub negation_count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pattern: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GroupMean {
    pub mean: f64,
    pub count: usize,
}

fn mean_of<'a>(values: impl Iterator<Item = &'a QueryEval>) -> GroupMean {
    let (sum, count) = values.fold((0.0, 0), |(s, c), q| (s + q.ndcg, c + 1));
    GroupMean {
        mean: if count == 0 { 0.0 } else { sum / count as f64 },
        count,
    }
}

/// Operator combination encoded in a method tag such as
/// `logical:product-sum-one-minus`.
pub fn method_operators(method: &str) -> Option<OperatorConfig> {
    method.strip_prefix("logical:")?.parse().ok()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub queries: Vec<QueryEval>,
    pub overall: GroupMean,
    pub by_method: BTreeMap<String, GroupMean>,
    /// Method, then negation count.
    pub by_negation: BTreeMap<String, BTreeMap<usize, GroupMean>>,
    /// Operator label, over `logical:` methods.
    pub by_operator: BTreeMap<String, GroupMean>,
}

impl EvalReport {
    pub fn from_queries(mut queries: Vec<QueryEval>) -> Self {
        queries.sort_by(|a, b| (&a.method, &a.qid).cmp(&(&b.method, &b.qid)));
        let mut methods: BTreeMap<String, Vec<&QueryEval>> = BTreeMap::new();
        for q in &queries {
            methods.entry(q.method.clone()).or_default().push(q);
        }
        let by_method = methods
            .iter()
            .map(|(m, qs)| (m.clone(), mean_of(qs.iter().copied())))
            .collect();
        let by_negation = methods
            .iter()
            .filter_map(|(m, qs)| {
                let mut groups: BTreeMap<usize, Vec<&QueryEval>> = BTreeMap::new();
                for q in qs {
                    groups.entry(q.negation_count?).or_default().push(q);
                }
                (!groups.is_empty()).then(|| {
                    let means = groups
                        .into_iter()
                        .map(|(n, qs)| (n, mean_of(qs.into_iter())))
                        .collect();
                    (m.clone(), means)
                })
            })
            .collect();
        let by_operator = methods
            .iter()
            .filter_map(|(m, qs)| Some((method_operators(m)?.label(), mean_of(qs.iter().copied()))))
            .collect();
        EvalReport {
            overall: mean_of(queries.iter()),
            queries,
            by_method,
            by_negation,
            by_operator,
        }
    }

    pub fn method_mean(&self, method: &str) -> Option<f64> {
        self.by_method.get(method).map(|g| g.mean)
    }

    pub fn negation_mean(&self, method: &str, negations: usize) -> Option<f64> {
        Some(self.by_negation.get(method)?.get(&negations)?.mean)
    }

    /// Methods as rows; one column per negation count, then the overall
    /// mean and query count.
    pub fn text_table(&self) -> String {
        let mut counts: Vec<usize> = self
            .by_negation
            .values()
            .flat_map(|g| g.keys().copied())
            .collect();
        counts.sort_unstable();
        counts.dedup();
        let mut header = vec!["method".to_string()];
        header.extend(counts.iter().map(|n| format!("neg={n}")));
        header.extend(["all".to_string(), "queries".to_string()]);
        let rows = self.by_method.iter().map(|(method, overall)| {
            let mut row = vec![method.clone()];
            for n in &counts {
                row.push(
                    self.negation_mean(method, *n)
                        .map_or_else(|| "-".to_string(), |v| format!("{v:.4}")),
                );
            }
            row.push(format!("{:.4}", overall.mean));
            row.push(overall.count.to_string());
            row
        });
        aligned(std::iter::once(header).chain(rows).collect())
    }

    /// Operator grid: rows are (AND, OR) pairs, columns NOT operators.
    pub fn ablation_table(&self) -> String {
        let mut table = vec![std::iter::once("and / or".to_string())
            .chain(NotOp::ALL.iter().map(|n| n.name().to_string()))
            .collect::<Vec<_>>()];
        for and_op in AndOp::ALL {
            for or_op in OrOp::ALL {
                let mut row = vec![format!("{} / {}", and_op.name(), or_op.name())];
                for not_op in NotOp::ALL {
                    let label = OperatorConfig::new(and_op, or_op, not_op).label();
                    row.push(
                        self.by_operator
                            .get(&label)
                            .map_or_else(|| "-".to_string(), |g| format!("{:.4}", g.mean)),
                    );
                }
                table.push(row);
            }
        }
        aligned(table)
    }
}

/// Left-aligned first column, right-aligned others.
fn aligned(rows: Vec<Vec<String>>) -> String {
    let columns = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..columns)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in rows {
        let mut line = String::new();
        for (c, cell) in row.iter().enumerate() {
            if c == 0 {
                let _ = write!(line, "{cell:<w$}", w = widths[0]);
            } else {
                let _ = write!(line, "  {cell:>w$}", w = widths[c]);
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

/// Scores every `(tag, qid)` group of a run. Negation counts and patterns
/// come from `manifest` when given.
pub fn evaluate_run(run: &[RunLine], qrels: &Qrels, manifest: Option<&Manifest>) -> Result<EvalReport, EvalError> {
    let mut groups: BTreeMap<(&str, &str), Vec<&RunLine>> = BTreeMap::new();
    for line in run {
        groups.entry((&line.tag, &line.qid)).or_default().push(line);
    }
    let mut queries = Vec::with_capacity(groups.len());
    for ((tag, qid), mut lines) in groups {
        let judgments = qrels.get(qid).ok_or_else(|| EvalError::UnknownQuery(qid.to_string()))?;
        lines.sort_by(|a, b| a.rank.cmp(&b.rank).then_with(|| a.doc_id.cmp(&b.doc_id)));
        let ranking: Vec<&str> = lines.iter().map(|l| l.doc_id.as_str()).collect();
        let ndcg = ndcg_at_k(&ranking, judgments, NDCG_K);
        let case = manifest.and_then(|m| m.case(qid));
        queries.push(QueryEval {
            qid: qid.to_string(),
            method: tag.to_string(),
            ndcg: ndcg.value,
            no_relevant: ndcg.no_relevant,
            negation_count: case.map(|c| c.negation_count),
            pattern: case.map(|c| c.pattern.clone()),
        });
    }
    Ok(EvalReport::from_queries(queries))
}

#[derive(Debug, Clone, Copy)]
pub enum Method<'a> {
    /// The rendered query string embedded as one text.
    Baseline,
    Logical(OperatorConfig),
    Calibrated(OperatorConfig, &'a CalibrationStore),
}

impl Method<'_> {
    pub fn tag(&self) -> String {
        match self {
            Method::Baseline => "baseline".to_string(),
            Method::Logical(c) => format!("logical:{}", c.label()),
            Method::Calibrated(c, _) => format!("calibrated:{}", c.label()),
        }
    }
}

/// One index over the documents of every case.
pub fn embed_suite(cases: &[SynthCase], embedder: &Embedder) -> Result<EmbeddedIndex, IndexError> {
    let corpus = Corpus::new(cases.iter().flat_map(|c| c.documents.iter().cloned()).collect())?;
    build_index(&corpus, embedder)
}

/// Ranks each case's own documents with `method`.
pub fn run_suite(
    cases: &[SynthCase],
    index: &EmbeddedIndex,
    embedder: &Embedder,
    method: Method<'_>,
    k: usize,
) -> Result<Vec<RankedList>, EvalError> {
    cases
        .par_iter()
        .map(|case| {
            let ids: Vec<&str> = case.documents.iter().map(|d| d.id.as_str()).collect();
            let sub = index.subset(&ids)?;
            let retriever = Retriever::new(&sub, embedder);
            Ok(match method {
                Method::Baseline => retriever.baseline_retrieve(&case.qid, &render(&case.query), k)?,
                Method::Logical(config) => retriever.logical_retrieve(&case.qid, &case.query, &config, k)?,
                Method::Calibrated(config, store) => {
                    calibrated_retrieve(&retriever, &case.qid, &case.query, &config, store, k)?
                }
            })
        })
        .collect()
}

pub fn score_suite(cases: &[SynthCase], runs: &[RankedList], method: &str) -> Vec<QueryEval> {
    cases
        .iter()
        .zip(runs)
        .map(|(case, run)| {
            let ndcg = ndcg_at_k(&run.doc_ids(), &case.qrels, NDCG_K);
            QueryEval {
                qid: case.qid.clone(),
                method: method.to_string(),
                ndcg: ndcg.value,
                no_relevant: ndcg.no_relevant,
                negation_count: Some(case.negation_count),
                pattern: Some(case.pattern.clone()),
            }
        })
        .collect()
}

pub fn evaluate_suite(
    cases: &[SynthCase],
    index: &EmbeddedIndex,
    embedder: &Embedder,
    methods: &[Method<'_>],
) -> Result<EvalReport, EvalError> {
    let mut queries = Vec::new();
    for method in methods {
        let runs = run_suite(cases, index, embedder, *method, NDCG_K)?;
        queries.extend(score_suite(cases, &runs, &method.tag()));
    }
    Ok(EvalReport::from_queries(queries))
}

/// Logical retrieval under all 12 operator combinations.
pub fn ablation_grid(cases: &[SynthCase], index: &EmbeddedIndex, embedder: &Embedder) -> Result<EvalReport, EvalError> {
    let methods: Vec<Method> = OperatorConfig::all().into_iter().map(Method::Logical).collect();
    evaluate_suite(cases, index, embedder, &methods)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingPoint {
    pub n: usize,
    pub baseline: f64,
    pub logical: f64,
}

impl ScalingPoint {
    pub fn gap(&self) -> f64 {
        self.logical - self.baseline
    }
}

/// Baseline and default-operator logical nDCG@10 on chains of each length.
pub fn scaling_curves(
    op: Connective,
    n_range: RangeInclusive<usize>,
    queries_per_n: usize,
    vocab: &Vocabulary,
    embedder: &Embedder,
    seed: u64,
) -> Result<Vec<ScalingPoint>, EvalError> {
    let logical = Method::Logical(OperatorConfig::default());
    n_range
        .map(|n| {
            let cases = chain_suite(op, n, queries_per_n, vocab, seed)?;
            let index = embed_suite(&cases, embedder)?;
            let report = evaluate_suite(&cases, &index, embedder, &[Method::Baseline, logical])?;
            Ok(ScalingPoint {
                n,
                baseline: report.method_mean("baseline").unwrap_or(0.0),
                logical: report.method_mean(&logical.tag()).unwrap_or(0.0),
            })
        })
        .collect()
}

pub fn scaling_table(points: &[ScalingPoint]) -> String {
    let mut rows = vec![["n", "baseline", "logical", "gap"].map(String::from).to_vec()];
    rows.extend(points.iter().map(|p| {
        vec![
            p.n.to_string(),
            format!("{:.4}", p.baseline),
            format!("{:.4}", p.logical),
            format!("{:.4}", p.gap()),
        ]
    }));
    aligned(rows)
}

/// Mean nDCG@10 over `trials` x cases when every document gets an i.i.d.
/// uniform score.
pub fn random_baseline(cases: &[SynthCase], trials: usize, seed: u64) -> f64 {
    if cases.is_empty() || trials == 0 {
        return 0.0;
    }
    let total: f64 = cases
        .par_iter()
        .enumerate()
        .map(|(i, case)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let ids: Vec<&str> = case.documents.iter().map(|d| d.id.as_str()).collect();
            let mut scored: Vec<(f64, &str)> = Vec::with_capacity(ids.len());
            let mut sum = 0.0;
            for _ in 0..trials {
                scored.clear();
                scored.extend(ids.iter().map(|&id| (rng.random::<f64>(), id)));
                scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
                let ranking: Vec<&str> = scored.iter().map(|&(_, id)| id).collect();
                sum += ndcg_at_k(&ranking, &case.qrels, NDCG_K).value;
            }
            sum
        })
        .sum();
    total / (trials * cases.len()) as f64
}
