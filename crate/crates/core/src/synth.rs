//! Synthetic logical-retrieval benchmark.
//!
//! For a query, every *positive category* (a prime implicant of the query
//! read as a boolean formula) yields one relevant document, and every *hard
//! negative* (a category with one literal flipped) yields one irrelevant
//! document. Documents are built from per-term keyword bundles, so the
//! relevance of each document is known exactly.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use rand::seq::{index::sample, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{text_tokens, token_bucket};
use crate::index::Document;
use crate::query::{parse_str, terms, QueryExpr};

/// Most terms a query may have for exhaustive category enumeration.
pub const MAX_TERMS: usize = 8;
/// Per-query caps on positive and negative documents.
pub const MAX_POSITIVES: usize = 3;
pub const MAX_NEGATIVES: usize = 3;
pub const FILLER: [&str; 2] = ["lorem", "ipsum"];
/// Query keywords that show up as tokens when a query string is embedded.
const KEYWORD_TOKENS: [&str; 3] = ["and", "or", "not"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SynthError {
    #[error("no score or assignment for term {0:?}")]
    MissingTerm(String),
    #[error("query has no satisfying assignment")]
    NoSatisfyingAssignment,
    #[error("query has {0} terms; at most {MAX_TERMS} are supported")]
    TooManyTerms(usize),
    #[error("keyword bundles overlap on token {0:?}")]
    VocabCollision(String),
    #[error("invalid bundle for {term:?}: {reason}")]
    InvalidBundle { term: String, reason: String },
    #[error("need {needed} topics, vocabulary has {available}")]
    InsufficientTopics { needed: usize, available: usize },
    #[error("chain length must be in 2..={MAX_TERMS}, got {0}")]
    InvalidChainLength(usize),
    #[error("could not place {0} topics without hash collisions")]
    VocabularyExhausted(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Literal {
    MustMatch,
    MustNotMatch,
    Unconstrained,
}

impl Literal {
    fn flipped(self) -> Literal {
        match self {
            Literal::MustMatch => Literal::MustNotMatch,
            Literal::MustNotMatch => Literal::MustMatch,
            Literal::Unconstrained => Literal::Unconstrained,
        }
    }
}

/// Match constraints for an ordered set of terms.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LiteralAssignment {
    entries: Vec<(String, Literal)>,
}

impl LiteralAssignment {
    pub fn new<S: Into<String>>(entries: impl IntoIterator<Item = (S, Literal)>) -> Self {
        LiteralAssignment {
            entries: entries.into_iter().map(|(t, l)| (t.into(), l)).collect(),
        }
    }

    /// Every term unconstrained.
    pub fn unconstrained(terms: &[String]) -> Self {
        Self::new(terms.iter().map(|t| (t.clone(), Literal::Unconstrained)))
    }

    pub fn get(&self, term: &str) -> Option<Literal> {
        self.entries.iter().find(|(t, _)| t == term).map(|&(_, l)| l)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Literal)> {
        self.entries.iter().map(|(t, l)| (t.as_str(), *l))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn constrained(&self) -> usize {
        self.entries
            .iter()
            .filter(|(_, l)| *l != Literal::Unconstrained)
            .count()
    }

    pub fn matched_terms(&self) -> impl Iterator<Item = &str> {
        self.entries
            .iter()
            .filter(|(_, l)| *l == Literal::MustMatch)
            .map(|(t, _)| t.as_str())
    }

    /// Unconstrained slots become `MustNotMatch`.
    pub fn completed(&self) -> Self {
        Self::new(self.entries.iter().map(|(t, l)| {
            let l = if *l == Literal::Unconstrained {
                Literal::MustNotMatch
            } else {
                *l
            };
            (t.clone(), l)
        }))
    }

    fn with(&self, index: usize, literal: Literal) -> Self {
        let mut out = self.clone();
        out.entries[index].1 = literal;
        out
    }
}

impl fmt::Display for LiteralAssignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        let mut first = true;
        for (term, lit) in &self.entries {
            let sign = match lit {
                Literal::MustMatch => "+",
                Literal::MustNotMatch => "-",
                Literal::Unconstrained => continue,
            };
            if !first {
                f.write_str(", ")?;
            }
            first = false;
            write!(f, "{sign}{term}")?;
        }
        f.write_str("}")
    }
}

/// Crisp evaluation. Unconstrained terms count as not matched.
pub fn boolean_eval(expr: &QueryExpr, assignment: &LiteralAssignment) -> Result<bool, SynthError> {
    Ok(match expr {
        QueryExpr::Term(t) => {
            assignment
                .get(t)
                .ok_or_else(|| SynthError::MissingTerm(t.clone()))?
                == Literal::MustMatch
        }
        QueryExpr::Not(child) => !boolean_eval(child, assignment)?,
        QueryExpr::And(children) => {
            let mut all = true;
            for c in children {
                all &= boolean_eval(c, assignment)?;
            }
            all
        }
        QueryExpr::Or(children) => {
            let mut any = false;
            for c in children {
                any |= boolean_eval(c, assignment)?;
            }
            any
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Connective {
    And,
    Or,
}

impl Connective {
    pub fn keyword(self) -> &'static str {
        match self {
            Connective::And => "AND",
            Connective::Or => "OR",
        }
    }
}

impl fmt::Display for Connective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

/// `[NOT] t1 op1 [NOT] t2 op2 [NOT] t3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QueryTemplate {
    pub op1: Connective,
    pub op2: Connective,
    pub negated: [bool; 3],
}

impl QueryTemplate {
    pub fn negation_count(&self) -> usize {
        self.negated.iter().filter(|&&n| n).count()
    }

    /// Placeholder form, e.g. `t1 AND t2 OR NOT t3`.
    pub fn pattern(&self) -> String {
        self.fill(["t1", "t2", "t3"].map(str::to_string))
    }

    fn fill(&self, slots: [String; 3]) -> String {
        let lit = |i: usize| {
            if self.negated[i] {
                format!("NOT {}", slots[i])
            } else {
                slots[i].clone()
            }
        };
        format!("{} {} {} {} {}", lit(0), self.op1, lit(1), self.op2, lit(2))
    }

    /// Fills the slots with quoted terms and parses the result, so operator
    /// precedence is exactly the query language's.
    pub fn instantiate(&self, terms: [&str; 3]) -> QueryExpr {
        let quoted = terms.map(|t| crate::query::render(&QueryExpr::term(t)));
        parse_str(&self.fill(quoted)).expect("templates are grammatical")
    }
}

impl fmt::Display for QueryTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.pattern())
    }
}

/// All 32 three-term templates: {AND, OR}^2 x {plain, negated}^3.
pub fn enumerate_templates() -> Vec<QueryTemplate> {
    let mut out = Vec::with_capacity(32);
    for op1 in [Connective::And, Connective::Or] {
        for op2 in [Connective::And, Connective::Or] {
            for bits in 0..8u8 {
                out.push(QueryTemplate {
                    op1,
                    op2,
                    negated: [bits & 4 != 0, bits & 2 != 0, bits & 1 != 0],
                });
            }
        }
    }
    out
}

/// Truth table of `expr` over `terms`; bit `i` of the row index is term `i`.
fn truth_table(expr: &QueryExpr, terms: &[String]) -> Result<Vec<bool>, SynthError> {
    (0..1usize << terms.len())
        .map(|row| {
            let assignment = LiteralAssignment::new(terms.iter().enumerate().map(|(i, t)| {
                let lit = if row >> i & 1 == 1 {
                    Literal::MustMatch
                } else {
                    Literal::MustNotMatch
                };
                (t.clone(), lit)
            }));
            boolean_eval(expr, &assignment)
        })
        .collect()
}

/// Whether every completion of the cube (`care` bits fixed to `value`) is
/// satisfying.
fn is_implicant(table: &[bool], care: usize, value: usize) -> bool {
    table
        .iter()
        .enumerate()
        .all(|(row, &sat)| sat || row & care != value)
}

fn cube_to_assignment(terms: &[String], care: usize, value: usize) -> LiteralAssignment {
    LiteralAssignment::new(terms.iter().enumerate().map(|(i, t)| {
        let lit = if care >> i & 1 == 0 {
            Literal::Unconstrained
        } else if value >> i & 1 == 1 {
            Literal::MustMatch
        } else {
            Literal::MustNotMatch
        };
        (t.clone(), lit)
    }))
}

/// Minimal satisfying partial assignments (prime implicants), found by
/// exhaustive enumeration. Ordered by term order, `MustMatch` before
/// `MustNotMatch` before `Unconstrained`.
pub fn positive_categories(expr: &QueryExpr) -> Result<Vec<LiteralAssignment>, SynthError> {
    let terms = terms(expr);
    let n = terms.len();
    if n > MAX_TERMS {
        return Err(SynthError::TooManyTerms(n));
    }
    let table = truth_table(expr, &terms)?;
    let mut primes = Vec::new();
    for care in 0..1usize << n {
        // every value that is a submask of care
        let mut value = care;
        loop {
            if is_implicant(&table, care, value)
                && (0..n)
                    .filter(|i| care >> i & 1 == 1)
                    .all(|i| !is_implicant(&table, care & !(1 << i), value & !(1 << i)))
            {
                primes.push(cube_to_assignment(&terms, care, value));
            }
            if value == 0 {
                break;
            }
            value = (value - 1) & care;
        }
    }
    if primes.is_empty() {
        return Err(SynthError::NoSatisfyingAssignment);
    }
    primes.sort_by(|a, b| {
        a.entries
            .iter()
            .map(|(_, l)| *l)
            .cmp(b.entries.iter().map(|(_, l)| *l))
    });
    Ok(primes)
}

/// How unconstrained slots are filled after a literal has been flipped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NegativeCompletion {
    /// Unconstrained terms are absent from the document. Flips whose
    /// completion still satisfies the query are dropped.
    Absent,
    /// Try completions with the fewest matched terms first and take the
    /// first that fails the query; drop the flip only if none does.
    #[default]
    Falsifying,
}

/// A flipped category and the concrete document assignment realizing it.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct HardNegative {
    pub flipped: LiteralAssignment,
    pub document: LiteralAssignment,
}

/// Complete, non-satisfying assignments that differ from `category` in
/// exactly one constrained literal, using [`NegativeCompletion::default`].
pub fn hard_negatives(
    category: &LiteralAssignment,
    expr: &QueryExpr,
) -> Result<Vec<LiteralAssignment>, SynthError> {
    Ok(hard_negatives_with(category, expr, NegativeCompletion::default())?
        .into_iter()
        .map(|n| n.document)
        .collect())
}

pub fn hard_negatives_with(
    category: &LiteralAssignment,
    expr: &QueryExpr,
    completion: NegativeCompletion,
) -> Result<Vec<HardNegative>, SynthError> {
    let free: Vec<usize> = category
        .entries
        .iter()
        .enumerate()
        .filter(|(_, (_, l))| *l == Literal::Unconstrained)
        .map(|(i, _)| i)
        .collect();
    // Completions of the free slots, fewest matches first.
    let mut fills: Vec<usize> = match completion {
        NegativeCompletion::Absent => vec![0],
        NegativeCompletion::Falsifying => (0..1usize << free.len()).collect(),
    };
    fills.sort_by_key(|f| (f.count_ones(), *f));

    let mut out = Vec::new();
    for (i, (_, lit)) in category.entries.iter().enumerate() {
        if *lit == Literal::Unconstrained {
            continue;
        }
        let flipped = category.with(i, lit.flipped());
        let base = flipped.completed();
        for &fill in &fills {
            let mut doc = base.clone();
            for (bit, &slot) in free.iter().enumerate() {
                if fill >> bit & 1 == 1 {
                    doc.entries[slot].1 = Literal::MustMatch;
                }
            }
            if !boolean_eval(expr, &doc)? {
                out.push(HardNegative {
                    flipped: flipped.clone(),
                    document: doc,
                });
                break;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topic {
    /// Term text used in queries: the bundle tokens joined by spaces.
    pub term: String,
    pub tokens: Vec<String>,
}

impl Topic {
    pub fn new(tokens: Vec<String>) -> Self {
        Topic {
            term: tokens.join(" "),
            tokens,
        }
    }
}

/// Topics with pairwise-disjoint keyword bundles, plus shared filler.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    topics: Vec<Topic>,
    filler: Vec<String>,
}

impl Vocabulary {
    pub fn new(topics: Vec<Topic>) -> Result<Self, SynthError> {
        let filler: Vec<String> = FILLER.iter().map(|s| s.to_string()).collect();
        let mut owner: HashMap<&str, &str> = filler.iter().map(|f| (f.as_str(), "filler")).collect();
        for topic in &topics {
            if topic.tokens.len() < 3 {
                return Err(SynthError::InvalidBundle {
                    term: topic.term.clone(),
                    reason: "needs at least 3 tokens".into(),
                });
            }
            let mut local = HashSet::new();
            for token in &topic.tokens {
                let normalized: Vec<String> = text_tokens(token).collect();
                if normalized.len() != 1 || normalized[0] != *token {
                    return Err(SynthError::InvalidBundle {
                        term: topic.term.clone(),
                        reason: format!("{token:?} is not a single lowercase token"),
                    });
                }
                if !local.insert(token.as_str()) {
                    return Err(SynthError::InvalidBundle {
                        term: topic.term.clone(),
                        reason: format!("repeated token {token:?}"),
                    });
                }
                if owner.insert(token, &topic.term).is_some() {
                    return Err(SynthError::VocabCollision(token.clone()));
                }
            }
        }
        Ok(Vocabulary { topics, filler })
    }

    /// Generates `n_topics` topics of pseudo-words. Every token, the filler
    /// and the query keywords land in distinct buckets of a hash embedding
    /// of size `dimension`, so term/document cosines have closed forms.
    pub fn generate(
        n_topics: usize,
        tokens_per_topic: usize,
        dimension: usize,
        seed: u64,
    ) -> Result<Self, SynthError> {
        const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
        const VOWELS: &[u8] = b"aeiou";
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut used_buckets: HashSet<usize> = FILLER
            .iter()
            .chain(KEYWORD_TOKENS.iter())
            .map(|t| token_bucket(t, dimension))
            .collect();
        let mut topics = Vec::with_capacity(n_topics);
        let mut attempts = 0usize;
        while topics.len() < n_topics {
            let mut tokens = Vec::with_capacity(tokens_per_topic);
            while tokens.len() < tokens_per_topic {
                attempts += 1;
                if attempts > 100_000 {
                    return Err(SynthError::VocabularyExhausted(n_topics));
                }
                let word: String = (0..3)
                    .flat_map(|_| {
                        [
                            CONSONANTS[rng.random_range(0..CONSONANTS.len())] as char,
                            VOWELS[rng.random_range(0..VOWELS.len())] as char,
                        ]
                    })
                    .collect();
                let bucket = token_bucket(&word, dimension);
                if used_buckets.insert(bucket) {
                    tokens.push(word);
                }
            }
            topics.push(Topic::new(tokens));
        }
        Self::new(topics)
    }

    pub fn len(&self) -> usize {
        self.topics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.topics.is_empty()
    }

    pub fn topics(&self) -> &[Topic] {
        &self.topics
    }

    pub fn topic(&self, term: &str) -> Option<&Topic> {
        self.topics.iter().find(|t| t.term == term)
    }

    pub fn filler(&self) -> &[String] {
        &self.filler
    }
}

/// Document text: the bundles of every `MustMatch` term plus the filler, in
/// an order shuffled by `seed`.
pub fn synth_document(
    id: impl Into<String>,
    assignment: &LiteralAssignment,
    vocab: &Vocabulary,
    seed: u64,
) -> Result<Document, SynthError> {
    let mut tokens: Vec<&str> = Vec::new();
    for (term, lit) in assignment.iter() {
        let topic = vocab
            .topic(term)
            .ok_or_else(|| SynthError::MissingTerm(term.to_string()))?;
        if lit == Literal::MustMatch {
            tokens.extend(topic.tokens.iter().map(String::as_str));
        }
    }
    tokens.extend(vocab.filler.iter().map(String::as_str));
    tokens.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(Document::new(id, tokens.join(" ")))
}

/// One benchmark query with its private document pool.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthCase {
    pub qid: String,
    pub query: QueryExpr,
    /// Template pattern, e.g. `t1 AND NOT t2 OR t3`.
    pub pattern: String,
    pub negation_count: usize,
    pub documents: Vec<Document>,
    pub qrels: BTreeMap<String, u32>,
}

impl SynthCase {
    pub fn relevant(&self) -> usize {
        self.qrels.values().filter(|&&r| r > 0).count()
    }
}

fn keep_at_most<T>(items: Vec<T>, cap: usize, rng: &mut ChaCha8Rng) -> Vec<T> {
    if items.len() <= cap {
        return items;
    }
    let mut keep = sample(rng, items.len(), cap).into_vec();
    keep.sort_unstable();
    let mut slots: Vec<Option<T>> = items.into_iter().map(Some).collect();
    keep.into_iter().map(|i| slots[i].take().unwrap()).collect()
}

/// Builds the document pool for one query: one relevant document per
/// positive category and one irrelevant document per distinct flipped
/// category, each list capped at three.
pub fn build_case(
    qid: &str,
    query: QueryExpr,
    pattern: String,
    vocab: &Vocabulary,
    rng: &mut ChaCha8Rng,
) -> Result<SynthCase, SynthError> {
    let categories = positive_categories(&query)?;
    let mut negatives: Vec<HardNegative> = Vec::new();
    for category in &categories {
        for neg in hard_negatives_with(category, &query, NegativeCompletion::default())? {
            if !negatives.iter().any(|n| n.flipped == neg.flipped) {
                negatives.push(neg);
            }
        }
    }
    let positives = keep_at_most(categories, MAX_POSITIVES, rng);
    let negatives = keep_at_most(negatives, MAX_NEGATIVES, rng);

    let mut pool: Vec<(LiteralAssignment, u32)> = positives
        .into_iter()
        .map(|c| (c.completed(), 1))
        .chain(negatives.into_iter().map(|n| (n.document, 0)))
        .collect();
    pool.shuffle(rng);

    let mut documents = Vec::with_capacity(pool.len());
    let mut qrels = BTreeMap::new();
    for (i, (assignment, rel)) in pool.into_iter().enumerate() {
        debug_assert_eq!(boolean_eval(&query, &assignment)?, rel == 1);
        let doc = synth_document(format!("{qid}-d{i}"), &assignment, vocab, rng.random())?;
        qrels.insert(doc.id.clone(), rel);
        documents.push(doc);
    }
    Ok(SynthCase {
        qid: qid.to_string(),
        negation_count: query.negation_count(),
        query,
        pattern,
        documents,
        qrels,
    })
}

fn pick_topics<'v>(vocab: &'v Vocabulary, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<&'v str>, SynthError> {
    if vocab.len() < n {
        return Err(SynthError::InsufficientTopics {
            needed: n,
            available: vocab.len(),
        });
    }
    Ok(sample(rng, vocab.len(), n)
        .into_iter()
        .map(|i| vocab.topics[i].term.as_str())
        .collect())
}

/// `queries_per_template` cases for each template, terms drawn at random
/// from the vocabulary. Query ids are `t{template:02}-q{n:03}`.
pub fn generate_suite(
    templates: &[QueryTemplate],
    vocab: &Vocabulary,
    queries_per_template: usize,
    seed: u64,
) -> Result<Vec<SynthCase>, SynthError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = Vec::with_capacity(templates.len() * queries_per_template);
    for (ti, template) in templates.iter().enumerate() {
        for q in 0..queries_per_template {
            let picked = pick_topics(vocab, 3, &mut rng)?;
            let query = template.instantiate([picked[0], picked[1], picked[2]]);
            cases.push(build_case(
                &format!("t{ti:02}-q{q:03}"),
                query,
                template.pattern(),
                vocab,
                &mut rng,
            )?);
        }
    }
    Ok(cases)
}

/// Pure AND- or OR-chains of `n_terms` terms. Query ids are
/// `{and|or}{n}-q{i:03}`.
pub fn chain_suite(
    op: Connective,
    n_terms: usize,
    queries_per_n: usize,
    vocab: &Vocabulary,
    seed: u64,
) -> Result<Vec<SynthCase>, SynthError> {
    if !(2..=MAX_TERMS).contains(&n_terms) {
        return Err(SynthError::InvalidChainLength(n_terms));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((n_terms as u64) << 32));
    let pattern = (1..=n_terms)
        .map(|i| format!("t{i}"))
        .collect::<Vec<_>>()
        .join(&format!(" {op} "));
    let prefix = match op {
        Connective::And => "and",
        Connective::Or => "or",
    };
    (0..queries_per_n)
        .map(|q| {
            let picked = pick_topics(vocab, n_terms, &mut rng)?;
            let leaves = picked.into_iter().map(QueryExpr::term);
            let query = match op {
                Connective::And => QueryExpr::and(leaves),
                Connective::Or => QueryExpr::or(leaves),
            };
            build_case(
                &format!("{prefix}{n_terms}-q{q:03}"),
                query,
                pattern.clone(),
                vocab,
                &mut rng,
            )
        })
        .collect()
}

/// Labeled documents for fitting a calibration model for one topic:
/// positives contain the topic's bundle, negatives do not, and both carry
/// zero to two bundles of other topics.
pub fn calibration_documents(
    vocab: &Vocabulary,
    term: &str,
    positives: usize,
    negatives: usize,
    seed: u64,
) -> Result<Vec<(Document, bool)>, SynthError> {
    let target = vocab
        .topics
        .iter()
        .position(|t| t.term == term)
        .ok_or_else(|| SynthError::MissingTerm(term.to_string()))?;
    if vocab.len() < 3 {
        return Err(SynthError::InsufficientTopics {
            needed: 3,
            available: vocab.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let others: Vec<usize> = (0..vocab.len()).filter(|&i| i != target).collect();
    let mut out = Vec::with_capacity(positives + negatives);
    for (i, label) in std::iter::repeat_n(true, positives)
        .chain(std::iter::repeat_n(false, negatives))
        .enumerate()
    {
        let extra = rng.random_range(0..=2usize);
        let mut matched: Vec<usize> = sample(&mut rng, others.len(), extra)
            .into_iter()
            .map(|j| others[j])
            .collect();
        if label {
            matched.push(target);
        }
        let assignment = LiteralAssignment::new(vocab.topics.iter().enumerate().map(|(j, t)| {
            let lit = if matched.contains(&j) {
                Literal::MustMatch
            } else {
                Literal::MustNotMatch
            };
            (t.term.clone(), lit)
        }));
        let doc = synth_document(format!("cal-{i}"), &assignment, vocab, rng.random())?;
        out.push((doc, label));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use Literal::*;

    fn assignment(pairs: &[(&str, Literal)]) -> LiteralAssignment {
        LiteralAssignment::new(pairs.iter().map(|&(t, l)| (t, l)))
    }

    #[test]
    fn boolean_eval_examples() {
        let e = parse_str("a AND NOT b").unwrap();
        assert!(boolean_eval(&e, &assignment(&[("a", MustMatch), ("b", MustNotMatch)])).unwrap());
        assert!(!boolean_eval(&e, &assignment(&[("a", MustMatch), ("b", MustMatch)])).unwrap());
        // AND binds tighter: mouse OR (dog AND NOT cat)
        let e = parse_str("mouse OR dog AND NOT cat").unwrap();
        assert!(boolean_eval(
            &e,
            &assignment(&[("mouse", MustNotMatch), ("dog", MustMatch), ("cat", MustNotMatch)])
        )
        .unwrap());
        assert_eq!(
            boolean_eval(&e, &assignment(&[("mouse", MustMatch)])),
            Err(SynthError::MissingTerm("dog".into()))
        );
    }

    #[test]
    fn templates() {
        let all = enumerate_templates();
        assert_eq!(all.len(), 32);
        let distinct: HashSet<_> = all.iter().collect();
        assert_eq!(distinct.len(), 32);
        let target = QueryTemplate {
            op1: Connective::And,
            op2: Connective::Or,
            negated: [false, false, true],
        };
        assert!(all.contains(&target));
        assert_eq!(target.pattern(), "t1 AND t2 OR NOT t3");
        assert_eq!(target.instantiate(["a", "b", "c"]), parse_str("a AND b OR NOT c").unwrap());
        let by_neg = (0..4)
            .map(|k| all.iter().filter(|t| t.negation_count() == k).count())
            .collect::<Vec<_>>();
        assert_eq!(by_neg, [4, 12, 12, 4]);
    }

    #[test]
    fn categories_of_parenthesized_query() {
        let e = parse_str(r#"("mouse" OR "dog") AND NOT "cat""#).unwrap();
        let cats = positive_categories(&e).unwrap();
        assert_eq!(
            cats,
            vec![
                assignment(&[("mouse", MustMatch), ("dog", Unconstrained), ("cat", MustNotMatch)]),
                assignment(&[("mouse", Unconstrained), ("dog", MustMatch), ("cat", MustNotMatch)]),
            ]
        );
        // Without parentheses AND binds tighter, giving different categories.
        let e = parse_str(r#""mouse" OR "dog" AND NOT "cat""#).unwrap();
        let shown: Vec<String> = positive_categories(&e).unwrap().iter().map(|c| c.to_string()).collect();
        assert_eq!(shown, ["{+mouse}", "{+dog, -cat}"]);
    }

    #[test]
    fn categories_simple_shapes() {
        let cats = positive_categories(&parse_str("a AND b AND c").unwrap()).unwrap();
        assert_eq!(cats.len(), 1);
        assert_eq!(cats[0].to_string(), "{+a, +b, +c}");
        let cats = positive_categories(&parse_str("a OR b").unwrap()).unwrap();
        let shown: Vec<String> = cats.iter().map(|c| c.to_string()).collect();
        assert_eq!(shown, ["{+a}", "{+b}"]);
        assert_eq!(
            positive_categories(&parse_str("a AND NOT a").unwrap()),
            Err(SynthError::NoSatisfyingAssignment)
        );
        let nine = QueryExpr::and((0..9).map(|i| QueryExpr::term(format!("t{i}"))));
        assert_eq!(positive_categories(&nine), Err(SynthError::TooManyTerms(9)));
    }

    #[test]
    fn hard_negatives_of_first_category() {
        let e = parse_str(r#"("mouse" OR "dog") AND NOT "cat""#).unwrap();
        let cat0 = &positive_categories(&e).unwrap()[0];
        let negs = hard_negatives(cat0, &e).unwrap();
        assert!(negs.contains(&assignment(&[
            ("mouse", MustMatch),
            ("dog", MustNotMatch),
            ("cat", MustMatch)
        ])));
        assert_eq!(negs.len(), 2);
    }

    #[test]
    fn hard_negatives_conjunction() {
        let e = parse_str("a AND b AND c").unwrap();
        let cat = &positive_categories(&e).unwrap()[0];
        let negs = hard_negatives(cat, &e).unwrap();
        assert_eq!(negs.len(), 3);
        for neg in &negs {
            assert_eq!(neg.matched_terms().count(), 2);
            assert!(!boolean_eval(&e, neg).unwrap());
        }
    }

    #[test]
    fn completion_rules_differ_on_negated_disjunction() {
        let e = parse_str("NOT a OR NOT b").unwrap();
        let cats = positive_categories(&e).unwrap();
        assert_eq!(cats[0].to_string(), "{-a}");
        // Absent completion: flipping a leaves b absent, which still satisfies NOT b.
        assert!(hard_negatives_with(&cats[0], &e, NegativeCompletion::Absent)
            .unwrap()
            .is_empty());
        let negs = hard_negatives_with(&cats[0], &e, NegativeCompletion::Falsifying).unwrap();
        assert_eq!(negs.len(), 1);
        assert_eq!(negs[0].flipped.to_string(), "{+a}");
        assert_eq!(negs[0].document.to_string(), "{+a, +b}");
    }

    #[test]
    fn vocabulary_validation() {
        let t = |ws: &[&str]| Topic::new(ws.iter().map(|s| s.to_string()).collect());
        assert!(Vocabulary::new(vec![t(&["a", "b", "c"]), t(&["d", "e", "f"])]).is_ok());
        assert_eq!(
            Vocabulary::new(vec![t(&["a", "b", "c"]), t(&["c", "e", "f"])]),
            Err(SynthError::VocabCollision("c".into()))
        );
        assert!(matches!(
            Vocabulary::new(vec![t(&["a", "b"])]),
            Err(SynthError::InvalidBundle { .. })
        ));
        assert!(matches!(
            Vocabulary::new(vec![t(&["a", "b", "Big"])]),
            Err(SynthError::InvalidBundle { .. })
        ));
        assert!(matches!(
            Vocabulary::new(vec![t(&["a", "b", "lorem"])]),
            Err(SynthError::VocabCollision(_))
        ));
    }

    #[test]
    fn generated_vocabulary_is_collision_free() {
        let vocab = Vocabulary::generate(40, 3, 256, 1).unwrap();
        assert_eq!(vocab.len(), 40);
        let mut buckets = HashSet::new();
        for token in vocab.topics().iter().flat_map(|t| &t.tokens).chain(vocab.filler()) {
            assert!(buckets.insert(token_bucket(token, 256)), "{token}");
        }
        assert_eq!(Vocabulary::generate(40, 3, 256, 1).unwrap(), vocab);
    }

    #[test]
    fn documents_follow_assignment() {
        let vocab = Vocabulary::generate(4, 3, 256, 9).unwrap();
        let [a, b] = [&vocab.topics()[0], &vocab.topics()[1]];
        let asg = LiteralAssignment::new([(a.term.as_str(), MustMatch), (b.term.as_str(), MustNotMatch)]);
        let doc = synth_document("x", &asg, &vocab, 3).unwrap();
        let tokens: Vec<String> = text_tokens(&doc.text).collect();
        assert!(a.tokens.iter().all(|t| tokens.contains(t)));
        assert!(b.tokens.iter().all(|t| !tokens.contains(t)));
        assert_eq!(synth_document("x", &asg, &vocab, 3).unwrap(), doc);

        let none = LiteralAssignment::new([(a.term.as_str(), MustNotMatch)]);
        let filler_only = synth_document("y", &none, &vocab, 3).unwrap();
        let mut toks: Vec<String> = text_tokens(&filler_only.text).collect();
        toks.sort();
        assert_eq!(toks, ["ipsum", "lorem"]);
    }

    #[test]
    fn suite_shape_and_determinism() {
        let vocab = Vocabulary::generate(30, 3, 256, 5).unwrap();
        let suite = generate_suite(&enumerate_templates(), &vocab, 2, 11).unwrap();
        assert_eq!(suite.len(), 64);
        for case in &suite {
            assert!(case.relevant() >= 1);
            assert!(case.documents.len() <= 6);
            for doc in &case.documents {
                assert!(doc.id.starts_with(&case.qid));
            }
        }
        assert_eq!(generate_suite(&enumerate_templates(), &vocab, 2, 11).unwrap(), suite);
        assert_ne!(generate_suite(&enumerate_templates(), &vocab, 2, 12).unwrap(), suite);
        let tiny = Vocabulary::generate(2, 3, 256, 5).unwrap();
        assert_eq!(
            generate_suite(&enumerate_templates(), &tiny, 1, 1),
            Err(SynthError::InsufficientTopics { needed: 3, available: 2 })
        );
    }

    #[test]
    fn chain_cases() {
        let vocab = Vocabulary::generate(20, 3, 256, 5).unwrap();
        for n in 2..=8 {
            let cases = chain_suite(Connective::And, n, 3, &vocab, 1).unwrap();
            for case in &cases {
                assert_eq!(case.relevant(), 1);
                assert_eq!(case.documents.len() - 1, n.min(MAX_NEGATIVES));
            }
        }
        assert_eq!(
            chain_suite(Connective::Or, 9, 1, &vocab, 1),
            Err(SynthError::InvalidChainLength(9))
        );
    }

    #[test]
    fn calibration_documents_labels() {
        let vocab = Vocabulary::generate(10, 3, 256, 5).unwrap();
        let term = vocab.topics()[0].term.clone();
        let docs = calibration_documents(&vocab, &term, 20, 20, 3).unwrap();
        assert_eq!(docs.len(), 40);
        let first_token = &vocab.topics()[0].tokens[0];
        for (doc, label) in docs {
            assert_eq!(text_tokens(&doc.text).any(|t| &t == first_token), label);
        }
    }
}
