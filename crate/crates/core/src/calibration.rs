//! Per-term logistic calibration of similarity scores,
//! `y = sigmoid((s - tau) * lambda)`, fitted by gradient descent on binary
//! cross-entropy.

use std::collections::BTreeMap;
use std::io::{self, BufRead};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::OperatorConfig;
use crate::engine::{EngineError, RankedList, Retriever};
use crate::query::QueryExpr;

pub const DEFAULT_LEARNING_RATE: f64 = 0.1;
pub const DEFAULT_ITERATIONS: usize = 2000;
/// Store key of the model used for terms without their own.
pub const FALLBACK_KEY: &str = "*";
const PROB_CLAMP: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("no labeled scores")]
    EmptyData,
    #[error("non-finite score {0}")]
    NonFinite(f64),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid calibration store: {0}")]
    Store(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationModel {
    pub tau: f64,
    pub lambda: f64,
}

impl CalibrationModel {
    pub fn apply(&self, score: f64) -> f64 {
        sigmoid((score - self.tau) * self.lambda)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitResult {
    pub model: CalibrationModel,
    pub loss: f64,
    /// Set when every label is the same; the model is then flat.
    pub degenerate: bool,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean binary cross-entropy of `model` on `data`.
pub fn loss(model: &CalibrationModel, data: &[(f64, bool)]) -> f64 {
    let total: f64 = data
        .iter()
        .map(|&(s, y)| {
            let p = model.apply(s).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            if y {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    total / data.len() as f64
}

/// Analytic `(dL/dtau, dL/dlambda)` of [`loss`].
pub fn gradient(model: &CalibrationModel, data: &[(f64, bool)]) -> (f64, f64) {
    let (mut g_tau, mut g_lambda) = (0.0, 0.0);
    for &(s, y) in data {
        let residual = model.apply(s) - if y { 1.0 } else { 0.0 };
        g_tau -= residual * model.lambda;
        g_lambda += residual * (s - model.tau);
    }
    let n = data.len() as f64;
    (g_tau / n, g_lambda / n)
}

/// Full-batch gradient descent from `tau = mean score`, `lambda = 1`.
pub fn fit(data: &[(f64, bool)], learning_rate: f64, iterations: usize) -> Result<FitResult, CalibrationError> {
    if data.is_empty() {
        return Err(CalibrationError::EmptyData);
    }
    if let Some(&(s, _)) = data.iter().find(|(s, _)| !s.is_finite()) {
        return Err(CalibrationError::NonFinite(s));
    }
    let mean = data.iter().map(|(s, _)| s).sum::<f64>() / data.len() as f64;
    let positives = data.iter().filter(|(_, y)| *y).count();
    if positives == 0 || positives == data.len() {
        log::warn!("calibration data has a single class; returning a flat model");
        let model = CalibrationModel { tau: mean, lambda: 0.0 };
        return Ok(FitResult {
            loss: loss(&model, data),
            model,
            degenerate: true,
        });
    }
    let mut model = CalibrationModel { tau: mean, lambda: 1.0 };
    for _ in 0..iterations {
        let (g_tau, g_lambda) = gradient(&model, data);
        model.tau -= learning_rate * g_tau;
        model.lambda -= learning_rate * g_lambda;
    }
    Ok(FitResult {
        loss: loss(&model, data),
        model,
        degenerate: false,
    })
}

/// Parses `score<TAB>label` lines; labels are `0` or `1`. Blank lines and
/// lines starting with `#` are skipped.
pub fn read_labeled(reader: impl BufRead) -> Result<Vec<(f64, bool)>, CalibrationError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |message: String| CalibrationError::Parse { line: i + 1, message };
        let (score, label) = line
            .split_once('\t')
            .ok_or_else(|| parse_err("expected score<TAB>label".into()))?;
        let score: f64 = score
            .trim()
            .parse()
            .map_err(|e| parse_err(format!("bad score {score:?}: {e}")))?;
        let label = match label.trim() {
            "0" => false,
            "1" => true,
            other => return Err(parse_err(format!("label must be 0 or 1, got {other:?}"))),
        };
        out.push((score, label));
    }
    Ok(out)
}

/// Models keyed by term, with [`FALLBACK_KEY`] as the shared fallback.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CalibrationStore {
    pub models: BTreeMap<String, CalibrationModel>,
}

impl CalibrationStore {
    pub fn insert(&mut self, term: impl Into<String>, model: CalibrationModel) {
        self.models.insert(term.into(), model);
    }

    pub fn model_for(&self, term: &str) -> Option<&CalibrationModel> {
        self.models.get(term).or_else(|| self.models.get(FALLBACK_KEY))
    }

    /// Calibrated score, or `score` unchanged when no model applies.
    pub fn apply(&self, term: &str, score: f64) -> f64 {
        self.model_for(term).map_or(score, |m| m.apply(score))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CalibrationError> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CalibrationError> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}

/// Logical retrieval with every term's scores passed through its model.
pub fn calibrated_retrieve(
    retriever: &Retriever<'_>,
    query_id: &str,
    expr: &QueryExpr,
    config: &OperatorConfig,
    store: &CalibrationStore,
    k: usize,
) -> Result<RankedList, EngineError> {
    let raw = retriever.term_scores(expr)?;
    let calibrated = raw.map_scores(|term, s| store.apply(term, s));
    retriever.rank_matrix(query_id, expr, &calibrated, config, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_data(seed: u64, n: usize) -> Vec<(f64, bool)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| (rng.random::<f64>(), rng.random::<bool>())).collect()
    }

    #[test]
    fn apply_basics() {
        let m = CalibrationModel { tau: 0.3, lambda: 4.0 };
        assert_eq!(m.apply(0.3), 0.5);
        let flat = CalibrationModel { tau: 0.3, lambda: 0.0 };
        assert_eq!(flat.apply(0.9), 0.5);
        let steep = CalibrationModel { tau: 0.3, lambda: 1e4 };
        assert!(steep.apply(0.31) > 1.0 - 1e-12);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let data = random_data(1, 50);
        let h = 1e-5;
        for model in [
            CalibrationModel { tau: 0.4, lambda: 1.0 },
            CalibrationModel { tau: 0.7, lambda: -3.0 },
            CalibrationModel { tau: 0.1, lambda: 6.0 },
        ] {
            let (g_tau, g_lambda) = gradient(&model, &data);
            let at = |tau, lambda| loss(&CalibrationModel { tau, lambda }, &data);
            let fd_tau = (at(model.tau + h, model.lambda) - at(model.tau - h, model.lambda)) / (2.0 * h);
            let fd_lambda = (at(model.tau, model.lambda + h) - at(model.tau, model.lambda - h)) / (2.0 * h);
            assert!(((g_tau - fd_tau) / fd_tau).abs() < 1e-6, "{g_tau} vs {fd_tau}");
            assert!(((g_lambda - fd_lambda) / fd_lambda).abs() < 1e-6, "{g_lambda} vs {fd_lambda}");
        }
    }

    #[test]
    fn separable_data() {
        let data: Vec<(f64, bool)> = (0..20).map(|_| (0.2, false)).chain((0..20).map(|_| (0.8, true))).collect();
        let fit = fit(&data, DEFAULT_LEARNING_RATE, DEFAULT_ITERATIONS).unwrap();
        assert!(!fit.degenerate);
        assert!(fit.model.tau > 0.2 && fit.model.tau < 0.8);
        assert!(data.iter().all(|&(s, y)| (fit.model.apply(s) > 0.5) == y));
    }

    #[test]
    fn flipped_labels_give_negative_slope() {
        let data: Vec<(f64, bool)> = (0..20).map(|_| (0.2, true)).chain((0..20).map(|_| (0.8, false))).collect();
        let fit = fit(&data, DEFAULT_LEARNING_RATE, DEFAULT_ITERATIONS).unwrap();
        assert!(fit.model.lambda < 0.0);
    }

    #[test]
    fn single_class_is_degenerate() {
        let data = [(0.2, true), (0.6, true)];
        let fit = fit(&data, 0.1, 10).unwrap();
        assert!(fit.degenerate);
        assert_eq!(fit.model, CalibrationModel { tau: 0.4, lambda: 0.0 });
        assert!(matches!(super::fit(&[], 0.1, 1), Err(CalibrationError::EmptyData)));
    }

    #[test]
    fn loss_decreases_at_small_rate() {
        let data = random_data(7, 100);
        let mut model = CalibrationModel { tau: 0.5, lambda: 1.0 };
        let mut prev = loss(&model, &data);
        for _ in 0..500 {
            let (gt, gl) = gradient(&model, &data);
            model.tau -= 0.01 * gt;
            model.lambda -= 0.01 * gl;
            let cur = loss(&model, &data);
            assert!(cur <= prev + 1e-15);
            prev = cur;
        }
    }

    #[test]
    fn store_fallback_and_parse() {
        let mut store = CalibrationStore::default();
        store.insert("dog", CalibrationModel { tau: 0.5, lambda: 10.0 });
        assert_eq!(store.apply("cat", 0.7), 0.7);
        store.insert(FALLBACK_KEY, CalibrationModel { tau: 0.5, lambda: 0.0 });
        assert_eq!(store.apply("cat", 0.7), 0.5);
        assert!(store.apply("dog", 0.7) > 0.8);
        let json = serde_json::to_string(&store).unwrap();
        assert!(json.starts_with("{\"*\":{\"tau\":0.5"));
        assert_eq!(serde_json::from_str::<CalibrationStore>(&json).unwrap(), store);

        let data = read_labeled("0.8\t1\n\n# c\n0.1\t0\n".as_bytes()).unwrap();
        assert_eq!(data, [(0.8, true), (0.1, false)]);
        assert!(matches!(
            read_labeled("0.8 1\n".as_bytes()),
            Err(CalibrationError::Parse { line: 1, .. })
        ));
        assert!(read_labeled("0.8\t2\n".as_bytes()).is_err());
    }
}
