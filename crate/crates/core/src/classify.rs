//! Binary linear SVM trained with Pegasos-style stochastic subgradient
//! descent on document embeddings.
//!
//! Objective: `λ/2 ‖w‖² + mean_i max(0, 1 − y_i (w·x_i + b))`, with the bias
//! unregularized. Step `1/(λt)`, one seeded shuffle per epoch, and the usual
//! projection of `w` onto the ball of radius `1/√λ`. The objective is
//! evaluated after every epoch and the lowest-objective epoch-end iterate
//! is returned, starting from the zero model, so the reported objective is
//! never above the zero model's value of 1.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::rng;

pub const MODEL_MAGIC: &str = "LSVM v1";
pub const DEFAULT_NEGATIVE_RATIO: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrainParams {
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            lambda: 0.01,
            epochs: 50,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub params: TrainParams,
    /// Objective of the returned iterate.
    pub objective: f64,
    /// Objective at the end of every epoch.
    pub history: Vec<f64>,
}

impl LinearModel {
    pub fn new(weights: Vec<f64>, bias: f64) -> Self {
        LinearModel {
            weights,
            bias,
            params: TrainParams {
                lambda: 0.0,
                epochs: 0,
                seed: 0,
            },
            objective: f64::NAN,
            history: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn margin(&self, x: &[f64]) -> f64 {
        dot(&self.weights, x) + self.bias
    }

    pub fn norm(&self) -> f64 {
        dot(&self.weights, &self.weights).sqrt()
    }

    /// Text format: `LSVM v1`, dimension, bias, then one weight per line.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut s = format!("{MODEL_MAGIC}\n{}\n{}\n", self.dim(), self.bias);
        for w in &self.weights {
            s.push_str(&format!("{w}\n"));
        }
        fs::write(path, s).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let perr = |line: usize, message: &str| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: message.to_string(),
        };
        let mut lines = text.lines();
        if lines.next() != Some(MODEL_MAGIC) {
            return Err(perr(1, "expected LSVM v1 header"));
        }
        let dim: usize = lines
            .next()
            .and_then(|l| l.trim().parse().ok())
            .ok_or_else(|| perr(2, "bad dimension"))?;
        let bias: f64 = lines
            .next()
            .and_then(|l| l.trim().parse().ok())
            .ok_or_else(|| perr(3, "bad bias"))?;
        let weights: Vec<f64> = lines
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| l.trim().parse().map_err(|_| perr(i + 4, "bad weight")))
            .collect::<Result<_>>()?;
        if weights.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: weights.len(),
            });
        }
        if !bias.is_finite() || weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("model file".into()));
        }
        Ok(LinearModel::new(weights, bias))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn objective(w: &[f64], b: f64, lambda: f64, xs: &[&[f64]], ys: &[f64]) -> f64 {
    let hinge: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (1.0 - y * (dot(w, x) + b)).max(0.0))
        .sum::<f64>()
        / xs.len() as f64;
    lambda / 2.0 * dot(w, w) + hinge
}

fn labelled_rows<'a>(
    m: &'a EmbeddingMatrix,
    positives: &BTreeSet<String>,
    negatives: &BTreeSet<String>,
) -> Result<(Vec<&'a [f64]>, Vec<f64>)> {
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::InvalidArgument("both classes need at least one example".into()));
    }
    if let Some(id) = positives.intersection(negatives).next() {
        return Err(Error::InvalidArgument(format!("{id:?} is both positive and negative")));
    }
    let mut xs = Vec::with_capacity(positives.len() + negatives.len());
    let mut ys = Vec::with_capacity(xs.capacity());
    for (set, y) in [(positives, 1.0), (negatives, -1.0)] {
        for id in set {
            xs.push(m.get(id).ok_or_else(|| Error::UnknownDoc(id.clone()))?);
            ys.push(y);
        }
    }
    Ok((xs, ys))
}

fn train_rows(xs: &[&[f64]], ys: &[f64], dim: usize, params: TrainParams) -> Result<LinearModel> {
    let TrainParams { lambda, epochs, seed } = params;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")));
    }
    if epochs == 0 {
        return Err(Error::InvalidArgument("epochs must be positive".into()));
    }
    let radius = 1.0 / lambda.sqrt();
    let mut rng = rng::rng(seed);
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut best = (w.clone(), b, objective(&w, b, lambda, xs, ys));
    let mut history = Vec::with_capacity(epochs);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut t = 0u64;
    for _ in 0..epochs {
        rng::shuffle(&mut rng, &mut order);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let (x, y) = (xs[i], ys[i]);
            let violated = y * (dot(&w, x) + b) < 1.0;
            let shrink = 1.0 - eta * lambda;
            w.iter_mut().for_each(|v| *v *= shrink);
            if violated {
                w.iter_mut().zip(x).for_each(|(v, xi)| *v += eta * y * xi);
                b += eta * y;
            }
            let norm = dot(&w, &w).sqrt();
            if norm > radius {
                let s = radius / norm;
                w.iter_mut().for_each(|v| *v *= s);
            }
        }
        let obj = objective(&w, b, lambda, xs, ys);
        if !obj.is_finite() {
            return Err(Error::Diverged);
        }
        history.push(obj);
        if obj < best.2 {
            best = (w.clone(), b, obj);
        }
    }
    let (weights, bias, objective) = best;
    Ok(LinearModel {
        weights,
        bias,
        params,
        objective,
        history,
    })
}

pub fn train(
    m: &EmbeddingMatrix,
    positives: &BTreeSet<String>,
    negatives: &BTreeSet<String>,
    params: TrainParams,
) -> Result<LinearModel> {
    let (xs, ys) = labelled_rows(m, positives, negatives)?;
    train_rows(&xs, &ys, m.dim(), params)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub doc_id: String,
    pub positive: bool,
    pub margin: f64,
}

/// Sign of the margin for every row; a zero margin is negative.
pub fn predict(model: &LinearModel, m: &EmbeddingMatrix) -> Result<Vec<Prediction>> {
    if model.dim() != m.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: m.dim(),
        });
    }
    Ok(m.doc_ids()
        .iter()
        .zip(m.rows())
        .map(|(id, x)| {
            let margin = model.margin(x);
            Prediction {
                doc_id: id.clone(),
                positive: margin > 0.0,
                margin,
            }
        })
        .collect())
}

/// CSV `doc_id,label,margin` with labels `positive` / `negative`.
pub fn write_predictions<W: Write>(w: &mut W, preds: &[Prediction]) -> std::io::Result<()> {
    writeln!(w, "doc_id,label,margin")?;
    for p in preds {
        writeln!(
            w,
            "{},{},{}",
            p.doc_id,
            if p.positive { "positive" } else { "negative" },
            p.margin
        )?;
    }
    Ok(())
}

/// Caps negatives at `ratio` times the positive count by seeded sampling.
pub fn subsample_negatives(
    negatives: &BTreeSet<String>,
    positives: usize,
    ratio: usize,
    seed: u64,
) -> BTreeSet<String> {
    let cap = positives.saturating_mul(ratio);
    if negatives.len() <= cap {
        return negatives.clone();
    }
    let all: Vec<&String> = negatives.iter().collect();
    rng::sample_without_replacement(&mut rng::rng(seed), all.len(), cap)
        .into_iter()
        .map(|i| all[i].clone())
        .collect()
}

/// Stratified fold assignment: each class is shuffled, then dealt
/// round-robin, so fold sizes differ by at most one per class.
pub fn stratified_folds(n_pos: usize, n_neg: usize, folds: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = rng::rng(seed);
    let mut out = vec![Vec::new(); folds];
    for (offset, n) in [(0, n_pos), (n_pos, n_neg)] {
        let mut idx: Vec<usize> = (offset..offset + n).collect();
        rng::shuffle(&mut rng, &mut idx);
        for (k, i) in idx.into_iter().enumerate() {
            out[k % folds].push(i);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvRow {
    pub lambda: f64,
    pub mean_accuracy: f64,
    pub fold_accuracies: Vec<f64>,
    pub best: bool,
}

/// Held-out accuracy per λ under stratified k-fold. The first λ with the
/// highest mean accuracy is flagged best.
pub fn cross_validate(
    m: &EmbeddingMatrix,
    positives: &BTreeSet<String>,
    negatives: &BTreeSet<String>,
    folds: usize,
    lambdas: &[f64],
    epochs: usize,
    seed: u64,
) -> Result<Vec<CvRow>> {
    if folds < 2 {
        return Err(Error::InvalidArgument("folds must be at least 2".into()));
    }
    if positives.len() < folds || negatives.len() < folds {
        return Err(Error::InvalidArgument(format!(
            "each class needs at least {folds} members (have {} positive, {} negative)",
            positives.len(),
            negatives.len()
        )));
    }
    let (xs, ys) = labelled_rows(m, positives, negatives)?;
    let assignment = stratified_folds(positives.len(), negatives.len(), folds, seed);
    let mut rows = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let mut accs = Vec::with_capacity(folds);
        for held in &assignment {
            let held_set: BTreeSet<usize> = held.iter().copied().collect();
            let (tx, ty): (Vec<&[f64]>, Vec<f64>) = (0..xs.len())
                .filter(|i| !held_set.contains(i))
                .map(|i| (xs[i], ys[i]))
                .unzip();
            let model = train_rows(&tx, &ty, m.dim(), TrainParams { lambda, epochs, seed })?;
            let correct = held
                .iter()
                .filter(|&&i| (model.margin(xs[i]) > 0.0) == (ys[i] > 0.0))
                .count();
            accs.push(correct as f64 / held.len() as f64);
        }
        rows.push(CvRow {
            lambda,
            mean_accuracy: accs.iter().sum::<f64>() / accs.len() as f64,
            fold_accuracies: accs,
            best: false,
        });
    }
    if let Some(best) = rows
        .iter()
        .enumerate()
        .fold(None, |b: Option<(usize, f64)>, (i, r)| match b {
            Some((_, a)) if a >= r.mean_accuracy => b,
            _ => Some((i, r.mean_accuracy)),
        })
    {
        rows[best.0].best = true;
    }
    Ok(rows)
}
