//! Logical-query document retrieval over dense embeddings.
//!
//! Queries combine free-text terms with `AND`, `OR` and `NOT`. Each term is
//! embedded on its own and scored against every document; the per-term
//! scores are then folded through the query tree with a configurable set of
//! fuzzy operators to produce one composite score per document.

pub mod algebra;
pub mod bundle;
pub mod calibration;
pub mod embedding;
pub mod engine;
pub mod eval;
pub mod index;
pub mod query;
pub mod synth;

pub use algebra::{AndOp, NotOp, OperatorConfig, OrOp};
pub use embedding::{BackendSpec, Embedder, EmbeddingVector};
pub use engine::{RankedList, Retriever};
pub use index::{Corpus, Document, EmbeddedIndex};
pub use query::{parse_str, render, terms, QueryExpr};
