use std::collections::HashMap;

use logret::algebra::{evaluate, AndOp, NotOp, OperatorConfig, OrOp};
use logret::calibration::CalibrationModel;
use logret::eval::{ndcg_at_k, Judgments};
use logret::index::top_k;
use logret::query::{parse_str, render, terms};
use logret::synth::{boolean_eval, hard_negatives, positive_categories, Literal, LiteralAssignment};
use logret::QueryExpr;
use proptest::prelude::*;

fn term_text() -> impl Strategy<Value = String> {
    prop_oneof![
        "[a-z]{1,6}",
        "[a-z]{1,4} [a-z]{1,4}",
        Just("AND".to_string()),
        Just("not".to_string()),
        Just("say \"hi\"".to_string()),
        Just("back\\slash".to_string()),
        Just("(paren)".to_string()),
    ]
}

fn expr_over(leaf: BoxedStrategy<QueryExpr>, depth: u32) -> impl Strategy<Value = QueryExpr> {
    leaf.prop_recursive(depth, 48, 3, |inner| {
        prop_oneof![
            inner.clone().prop_map(QueryExpr::not),
            prop::collection::vec(inner.clone(), 2..4).prop_map(QueryExpr::and),
            prop::collection::vec(inner, 2..4).prop_map(QueryExpr::or),
        ]
    })
}

fn any_expr() -> impl Strategy<Value = QueryExpr> {
    expr_over(term_text().prop_map(QueryExpr::term).boxed(), 6)
}

/// Expressions over at most four single-letter terms.
fn small_expr() -> impl Strategy<Value = QueryExpr> {
    expr_over(prop::sample::select(vec!["a", "b", "c", "d"]).prop_map(QueryExpr::term).boxed(), 4)
}

fn positive_expr() -> impl Strategy<Value = QueryExpr> {
    prop::sample::select(vec!["a", "b", "c", "d"])
        .prop_map(QueryExpr::term)
        .prop_recursive(4, 32, 3, |inner| {
            prop_oneof![
                prop::collection::vec(inner.clone(), 2..4).prop_map(QueryExpr::and),
                prop::collection::vec(inner, 2..4).prop_map(QueryExpr::or),
            ]
        })
}

fn any_config() -> impl Strategy<Value = OperatorConfig> {
    (
        prop::sample::select(AndOp::ALL.to_vec()),
        prop::sample::select(OrOp::ALL.to_vec()),
        prop::sample::select(NotOp::ALL.to_vec()),
    )
        .prop_map(|(a, o, n)| OperatorConfig::new(a, o, n))
}

fn complete(names: &[String], row: usize) -> LiteralAssignment {
    LiteralAssignment::new(names.iter().enumerate().map(|(i, n)| {
        let lit = if row >> i & 1 == 1 { Literal::MustMatch } else { Literal::MustNotMatch };
        (n.clone(), lit)
    }))
}

/// Every completion of a partial assignment.
fn completions(partial: &LiteralAssignment) -> Vec<LiteralAssignment> {
    let free: Vec<&str> = partial
        .iter()
        .filter(|(_, l)| *l == Literal::Unconstrained)
        .map(|(t, _)| t)
        .collect();
    (0..1usize << free.len())
        .map(|fill| {
            LiteralAssignment::new(partial.iter().map(|(t, l)| {
                let lit = match free.iter().position(|f| *f == t) {
                    Some(i) if fill >> i & 1 == 1 => Literal::MustMatch,
                    Some(_) => Literal::MustNotMatch,
                    None => l,
                };
                (t.to_string(), lit)
            }))
        })
        .collect()
}

fn relax(partial: &LiteralAssignment, term: &str) -> LiteralAssignment {
    LiteralAssignment::new(partial.iter().map(|(t, l)| {
        (t.to_string(), if t == term { Literal::Unconstrained } else { l })
    }))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn render_parse_round_trip(expr in any_expr()) {
        let text = render(&expr);
        prop_assert_eq!(parse_str(&text).unwrap(), expr, "{}", text);
    }

    #[test]
    fn parsed_trees_are_flat(expr in any_expr()) {
        prop_assert!(parse_str(&render(&expr)).unwrap().is_well_formed());
    }

    #[test]
    fn crisp_scores_match_boolean_eval(expr in small_expr()) {
        let names = terms(&expr);
        let config = OperatorConfig::zadeh();
        for row in 0..1usize << names.len() {
            let scores: HashMap<String, f64> =
                names.iter().enumerate().map(|(i, n)| (n.clone(), (row >> i & 1) as f64)).collect();
            let crisp = boolean_eval(&expr, &complete(&names, row)).unwrap();
            prop_assert_eq!(evaluate(&expr, &scores, &config).unwrap(), if crisp { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn negation_free_queries_are_monotone(
        expr in positive_expr(),
        config in any_config(),
        base in prop::collection::vec(0.0f64..=1.0, 4),
        which in 0usize..4,
        bump in 0.0f64..=0.5,
    ) {
        let names = ["a", "b", "c", "d"];
        let low: HashMap<String, f64> = names.iter().zip(&base).map(|(n, s)| (n.to_string(), *s)).collect();
        let mut high = low.clone();
        *high.get_mut(names[which]).unwrap() = (base[which] + bump).min(1.0);
        prop_assert!(evaluate(&expr, &high, &config).unwrap() >= evaluate(&expr, &low, &config).unwrap() - 1e-12);
    }

    #[test]
    fn operand_order_is_irrelevant(
        scores in prop::collection::vec(0.0f64..=1.0, 2..6),
        config in any_config(),
        rotate in 0usize..6,
    ) {
        let names: Vec<String> = (0..scores.len()).map(|i| format!("t{i}")).collect();
        let map: HashMap<String, f64> = names.iter().cloned().zip(scores.iter().copied()).collect();
        let mut rotated = names.clone();
        rotated.rotate_left(rotate % names.len());
        for build in [QueryExpr::and as fn(Vec<QueryExpr>) -> QueryExpr, QueryExpr::or] {
            let a = evaluate(&build(names.iter().map(QueryExpr::term).collect()), &map, &config).unwrap();
            let b = evaluate(&build(rotated.iter().map(QueryExpr::term).collect()), &map, &config).unwrap();
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn categories_are_sound_and_minimal(expr in small_expr()) {
        let Ok(categories) = positive_categories(&expr) else {
            // unsatisfiable: no row of the truth table is true
            let names = terms(&expr);
            for row in 0..1usize << names.len() {
                prop_assert!(!boolean_eval(&expr, &complete(&names, row)).unwrap());
            }
            return Ok(());
        };
        for cat in &categories {
            for c in completions(cat) {
                prop_assert!(boolean_eval(&expr, &c).unwrap(), "{} not sound", cat);
            }
            for (term, lit) in cat.iter() {
                if lit == Literal::Unconstrained {
                    continue;
                }
                let relaxed = relax(cat, term);
                let breaks = completions(&relaxed).iter().any(|c| !boolean_eval(&expr, c).unwrap());
                prop_assert!(breaks, "{} is not minimal in {}", cat, term);
            }
        }
    }

    #[test]
    fn hard_negatives_flip_one_literal_and_fail(expr in small_expr()) {
        let Ok(categories) = positive_categories(&expr) else { return Ok(()); };
        for cat in &categories {
            for neg in hard_negatives(cat, &expr).unwrap() {
                prop_assert!(!boolean_eval(&expr, &neg).unwrap());
                let flipped = cat
                    .iter()
                    .filter(|(t, l)| *l != Literal::Unconstrained && neg.get(t) != Some(*l))
                    .count();
                prop_assert_eq!(flipped, 1);
            }
        }
    }

    #[test]
    fn ndcg_ignores_monotone_score_transforms(
        scores in prop::collection::vec(0.0f64..1.0, 1..8),
        rels in prop::collection::vec(0u32..3, 8),
        scale in 0.1f64..10.0,
        shift in -5.0f64..5.0,
    ) {
        let ids: Vec<String> = (0..scores.len()).map(|i| format!("d{i}")).collect();
        let judgments: Judgments = ids.iter().cloned().zip(rels.iter().copied()).collect();
        let raw: Vec<(String, f64)> = ids.iter().cloned().zip(scores.iter().copied()).collect();
        let moved: Vec<(String, f64)> = raw.iter().map(|(d, s)| (d.clone(), (s * scale + shift).exp())).collect();
        let rank = |v: &[(String, f64)]| top_k(v, 10).into_iter().map(|r| r.doc_id).collect::<Vec<_>>();
        prop_assert_eq!(
            ndcg_at_k(&rank(&raw), &judgments, 10),
            ndcg_at_k(&rank(&moved), &judgments, 10)
        );
    }

    #[test]
    fn positive_slope_calibration_is_increasing(
        tau in 0.0f64..1.0,
        lambda in 0.01f64..20.0,
        a in 0.0f64..1.0,
        b in 0.0f64..1.0,
    ) {
        let m = CalibrationModel { tau, lambda };
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assume!(hi - lo > 1e-9);
        prop_assert!(m.apply(lo) < m.apply(hi));
    }

    #[test]
    fn top_k_breaks_ties_by_id(scores in prop::collection::vec(0u8..3, 1..10)) {
        let v: Vec<(String, f64)> = scores.iter().enumerate().map(|(i, s)| (format!("d{i}"), *s as f64)).collect();
        let ranked = top_k(&v, v.len());
        for w in ranked.windows(2) {
            prop_assert!(w[0].score > w[1].score || (w[0].score == w[1].score && w[0].doc_id < w[1].doc_id));
        }
    }
}
