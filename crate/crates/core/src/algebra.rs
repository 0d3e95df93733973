//! Fuzzy operators and bottom-up evaluation of a query tree over per-term
//! scores.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::query::QueryExpr;

/// Lower clamp applied before reciprocal negation.
pub const RECIPROCAL_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AlgebraError {
    #[error("{op} needs at least 2 operands, got {got}")]
    Arity { op: &'static str, got: usize },
    #[error("no score for term {0:?}")]
    MissingTerm(String),
    #[error("unknown operator {0:?}")]
    UnknownOperator(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AndOp {
    #[default]
    Product,
    Sum,
    Min,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrOp {
    #[default]
    Sum,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NotOp {
    #[default]
    OneMinus,
    Reciprocal,
}

impl AndOp {
    pub const ALL: [AndOp; 3] = [AndOp::Min, AndOp::Product, AndOp::Sum];

    pub fn name(self) -> &'static str {
        match self {
            AndOp::Product => "product",
            AndOp::Sum => "sum",
            AndOp::Min => "min",
        }
    }
}

impl OrOp {
    pub const ALL: [OrOp; 2] = [OrOp::Max, OrOp::Sum];

    pub fn name(self) -> &'static str {
        match self {
            OrOp::Sum => "sum",
            OrOp::Max => "max",
        }
    }
}

impl NotOp {
    pub const ALL: [NotOp; 2] = [NotOp::OneMinus, NotOp::Reciprocal];

    pub fn name(self) -> &'static str {
        match self {
            NotOp::OneMinus => "one-minus",
            NotOp::Reciprocal => "reciprocal",
        }
    }
}

macro_rules! parse_by_name {
    ($ty:ty) => {
        impl FromStr for $ty {
            type Err = AlgebraError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                <$ty>::ALL
                    .into_iter()
                    .find(|op| op.name() == s)
                    .ok_or_else(|| AlgebraError::UnknownOperator(s.to_string()))
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }
    };
}

parse_by_name!(AndOp);
parse_by_name!(OrOp);
parse_by_name!(NotOp);

/// The (AND, OR, NOT) operator triple. Defaults to product, sum, one-minus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct OperatorConfig {
    pub and_op: AndOp,
    pub or_op: OrOp,
    pub not_op: NotOp,
}

impl OperatorConfig {
    pub fn new(and_op: AndOp, or_op: OrOp, not_op: NotOp) -> Self {
        OperatorConfig {
            and_op,
            or_op,
            not_op,
        }
    }

    /// Min / max / one-minus: the classical Zadeh operators, which reduce to
    /// boolean logic on crisp inputs.
    pub fn zadeh() -> Self {
        Self::new(AndOp::Min, OrOp::Max, NotOp::OneMinus)
    }

    /// All 12 combinations, ordered by AND, then OR, then NOT.
    pub fn all() -> Vec<OperatorConfig> {
        let mut out = Vec::with_capacity(12);
        for and_op in AndOp::ALL {
            for or_op in OrOp::ALL {
                for not_op in NotOp::ALL {
                    out.push(Self::new(and_op, or_op, not_op));
                }
            }
        }
        out
    }

    /// Short label, e.g. `product-sum-one-minus`.
    pub fn label(&self) -> String {
        format!("{}-{}-{}", self.and_op, self.or_op, self.not_op)
    }
}

impl fmt::Display for OperatorConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for OperatorConfig {
    type Err = AlgebraError;

    /// Parses a label produced by [`OperatorConfig::label`].
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (and_s, rest) = s
            .split_once('-')
            .ok_or_else(|| AlgebraError::UnknownOperator(s.to_string()))?;
        let (or_s, not_s) = rest
            .split_once('-')
            .ok_or_else(|| AlgebraError::UnknownOperator(s.to_string()))?;
        Ok(Self::new(and_s.parse()?, or_s.parse()?, not_s.parse()?))
    }
}

fn check_arity(op: &'static str, scores: &[f64]) -> Result<(), AlgebraError> {
    if scores.len() < 2 {
        return Err(AlgebraError::Arity {
            op,
            got: scores.len(),
        });
    }
    Ok(())
}

pub fn apply_and(config: &OperatorConfig, scores: &[f64]) -> Result<f64, AlgebraError> {
    check_arity("AND", scores)?;
    Ok(fold_and(config.and_op, scores.iter().copied()))
}

pub fn apply_or(config: &OperatorConfig, scores: &[f64]) -> Result<f64, AlgebraError> {
    check_arity("OR", scores)?;
    Ok(fold_or(config.or_op, scores.iter().copied()))
}

pub fn apply_not(config: &OperatorConfig, score: f64) -> f64 {
    match config.not_op {
        NotOp::OneMinus => 1.0 - score,
        NotOp::Reciprocal => 1.0 / score.max(RECIPROCAL_EPSILON),
    }
}

fn fold_and(op: AndOp, scores: impl Iterator<Item = f64>) -> f64 {
    match op {
        AndOp::Product => scores.product(),
        AndOp::Sum => scores.sum(),
        AndOp::Min => scores.fold(f64::INFINITY, f64::min),
    }
}

fn fold_or(op: OrOp, scores: impl Iterator<Item = f64>) -> f64 {
    match op {
        OrOp::Sum => scores.sum(),
        OrOp::Max => scores.fold(f64::NEG_INFINITY, f64::max),
    }
}

/// Per-term scores for one document.
pub type TermScores = HashMap<String, f64>;

/// Evaluates `expr` with scores supplied by `lookup`.
pub fn evaluate_with<F>(
    expr: &QueryExpr,
    config: &OperatorConfig,
    lookup: &F,
) -> Result<f64, AlgebraError>
where
    F: Fn(&str) -> Option<f64>,
{
    match expr {
        QueryExpr::Term(t) => lookup(t).ok_or_else(|| AlgebraError::MissingTerm(t.clone())),
        QueryExpr::Not(child) => Ok(apply_not(config, evaluate_with(child, config, lookup)?)),
        QueryExpr::And(children) => {
            let values = children
                .iter()
                .map(|c| evaluate_with(c, config, lookup))
                .collect::<Result<Vec<_>, _>>()?;
            apply_and(config, &values)
        }
        QueryExpr::Or(children) => {
            let values = children
                .iter()
                .map(|c| evaluate_with(c, config, lookup))
                .collect::<Result<Vec<_>, _>>()?;
            apply_or(config, &values)
        }
    }
}

pub fn evaluate(
    expr: &QueryExpr,
    term_scores: &TermScores,
    config: &OperatorConfig,
) -> Result<f64, AlgebraError> {
    evaluate_with(expr, config, &|t| term_scores.get(t).copied())
}

/// Renders the composed formula with scores substituted, e.g.
/// `(0.500 + 0.400 * 0.600) * (1 - 0.200) = 0.592`.
pub fn explain<F>(expr: &QueryExpr, config: &OperatorConfig, lookup: &F) -> Result<String, AlgebraError>
where
    F: Fn(&str) -> Option<f64>,
{
    let value = evaluate_with(expr, config, lookup)?;
    let mut out = String::new();
    explain_into(expr, config, lookup, &mut out, true)?;
    out.push_str(&format!(" = {value:.4}"));
    Ok(out)
}

fn explain_into<F>(
    expr: &QueryExpr,
    config: &OperatorConfig,
    lookup: &F,
    out: &mut String,
    top: bool,
) -> Result<(), AlgebraError>
where
    F: Fn(&str) -> Option<f64>,
{
    let join = |children: &[QueryExpr], sep: &str, out: &mut String| -> Result<(), AlgebraError> {
        for (i, c) in children.iter().enumerate() {
            if i > 0 {
                out.push_str(sep);
            }
            explain_into(c, config, lookup, out, false)?;
        }
        Ok(())
    };
    match expr {
        QueryExpr::Term(t) => {
            let s = lookup(t).ok_or_else(|| AlgebraError::MissingTerm(t.clone()))?;
            out.push_str(&format!("{s:.4}"));
        }
        QueryExpr::Not(child) => {
            out.push_str(match config.not_op {
                NotOp::OneMinus => "(1 - ",
                NotOp::Reciprocal => "1/(",
            });
            explain_into(child, config, lookup, out, true)?;
            out.push(')');
        }
        QueryExpr::And(children) => match config.and_op {
            AndOp::Min => {
                out.push_str("min(");
                join(children, ", ", out)?;
                out.push(')');
            }
            op => {
                let sep = if op == AndOp::Product { " * " } else { " + " };
                if !top {
                    out.push('(');
                }
                join(children, sep, out)?;
                if !top {
                    out.push(')');
                }
            }
        },
        QueryExpr::Or(children) => match config.or_op {
            OrOp::Max => {
                out.push_str("max(");
                join(children, ", ", out)?;
                out.push(')');
            }
            OrOp::Sum => {
                if !top {
                    out.push('(');
                }
                join(children, " + ", out)?;
                if !top {
                    out.push(')');
                }
            }
        },
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::parse_str;

    fn cfg(and_op: AndOp, or_op: OrOp, not_op: NotOp) -> OperatorConfig {
        OperatorConfig::new(and_op, or_op, not_op)
    }

    #[test]
    fn and_examples() {
        let product = OperatorConfig::default();
        assert!((apply_and(&product, &[0.5, 0.4]).unwrap() - 0.2).abs() < 1e-15);
        let min = cfg(AndOp::Min, OrOp::Sum, NotOp::OneMinus);
        for x in [0.0, 0.3, 1.0, 7.5] {
            assert_eq!(apply_and(&min, &[x, x]).unwrap(), x);
        }
        let sum = cfg(AndOp::Sum, OrOp::Sum, NotOp::OneMinus);
        assert!((apply_and(&sum, &[0.3, 0.3, 0.3]).unwrap() - 0.9).abs() < 1e-12);
        assert_eq!(
            apply_and(&sum, &[0.3]),
            Err(AlgebraError::Arity { op: "AND", got: 1 })
        );
    }

    #[test]
    fn or_examples() {
        let max = cfg(AndOp::Product, OrOp::Max, NotOp::OneMinus);
        assert_eq!(apply_or(&max, &[0.2, 0.7]).unwrap(), 0.7);
        let sum = OperatorConfig::default();
        assert!((apply_or(&sum, &[0.2, 0.7]).unwrap() - 0.9).abs() < 1e-15);
        assert_eq!(apply_or(&sum, &[0.0, 0.0]).unwrap(), 0.0);
        assert!(apply_or(&sum, &[]).is_err());
    }

    #[test]
    fn not_examples() {
        let one_minus = OperatorConfig::default();
        assert_eq!(apply_not(&one_minus, 1.0), 0.0);
        assert_eq!(apply_not(&one_minus, 0.0), 1.0);
        let recip = cfg(AndOp::Product, OrOp::Sum, NotOp::Reciprocal);
        assert!((apply_not(&recip, 0.0) - 1e6).abs() < 1e-6);
        assert_eq!(apply_not(&recip, 0.5), 2.0);
    }

    #[test]
    fn evaluate_worked_example() {
        let expr = parse_str(r#"("dog" OR "cat" AND "mouse") AND NOT "giraffe""#).unwrap();
        let scores: TermScores = [("dog", 0.5), ("cat", 0.4), ("mouse", 0.6), ("giraffe", 0.2)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        let s = evaluate(&expr, &scores, &OperatorConfig::default()).unwrap();
        assert!((s - 0.592).abs() < 1e-12);
    }

    #[test]
    fn evaluate_leaf_and_contradiction() {
        let mut scores = TermScores::new();
        scores.insert("a".into(), 0.33);
        assert_eq!(
            evaluate(&QueryExpr::term("a"), &scores, &OperatorConfig::default()).unwrap(),
            0.33
        );
        scores.insert("a".into(), 1.0);
        let e = QueryExpr::And(vec![QueryExpr::term("a"), QueryExpr::not(QueryExpr::term("a"))]);
        assert_eq!(evaluate(&e, &scores, &OperatorConfig::default()).unwrap(), 0.0);
    }

    #[test]
    fn evaluate_missing_term() {
        let e = parse_str("a AND b").unwrap();
        let mut scores = TermScores::new();
        scores.insert("a".into(), 0.5);
        assert_eq!(
            evaluate(&e, &scores, &OperatorConfig::default()),
            Err(AlgebraError::MissingTerm("b".into()))
        );
    }

    #[test]
    fn config_labels_round_trip() {
        let all = OperatorConfig::all();
        assert_eq!(all.len(), 12);
        for c in all {
            assert_eq!(c.label().parse::<OperatorConfig>().unwrap(), c);
        }
        assert_eq!(OperatorConfig::default().label(), "product-sum-one-minus");
        assert!("product-xor-one-minus".parse::<OperatorConfig>().is_err());
    }

    #[test]
    fn explain_formula() {
        let expr = parse_str(r#"("dog" OR "cat" AND "mouse") AND NOT "giraffe""#).unwrap();
        let lookup = |t: &str| match t {
            "dog" => Some(0.5),
            "cat" => Some(0.4),
            "mouse" => Some(0.6),
            "giraffe" => Some(0.2),
            _ => None,
        };
        let text = explain(&expr, &OperatorConfig::default(), &lookup).unwrap();
        assert_eq!(
            text,
            "(0.5000 + (0.4000 * 0.6000)) * (1 - 0.2000) = 0.5920"
        );
    }
}
