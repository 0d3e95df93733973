//! Helpers shared by the integration test targets.

#![allow(dead_code)]

use logret::QueryExpr;
use rand::Rng;

/// Random expression over `terms`, at most `depth` levels deep.
pub fn random_expr(rng: &mut impl Rng, terms: &[&str], depth: usize) -> QueryExpr {
    if depth == 0 || rng.random_bool(0.3) {
        return QueryExpr::term(terms[rng.random_range(0..terms.len())]);
    }
    match rng.random_range(0..3) {
        0 => QueryExpr::not(random_expr(rng, terms, depth - 1)),
        op => {
            let n = rng.random_range(2..=3);
            let children: Vec<QueryExpr> = (0..n).map(|_| random_expr(rng, terms, depth - 1)).collect();
            if op == 1 {
                QueryExpr::and(children)
            } else {
                QueryExpr::or(children)
            }
        }
    }
}
