//! One-vs-rest linear SVM over unigram counts.
//!
//! Each binary problem minimises `λ/2·‖w‖² + mean_i max(0, 1 − y_i(w·x_i + b))`
//! with `λ = 1/C` by full-batch subgradient descent: step `1/(λt)`, the
//! weight vector projected onto the ball of radius `1/√λ`, the bias left
//! unregularised, and the returned solution the average of the iterates
//! from the second half of the run. Nothing is sampled, so training is
//! deterministic and duplicating every example changes nothing.

use std::collections::HashMap;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::weighted_metrics;
use crate::{Error, Result};

pub const DEFAULT_C_GRID: [f64; 4] = [0.01, 0.1, 1.0, 10.0];

/// `(feature index, value)` pairs with unique, ascending indices.
pub type SparseVec = Vec<(usize, f64)>;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct UnigramIndex {
    pub features: Vec<String>,
    #[serde(skip)]
    lookup: HashMap<String, usize>,
}

impl UnigramIndex {
    /// Every distinct token of the training documents, in first-seen order.
    pub fn fit<S: AsRef<str>>(docs: &[Vec<S>]) -> Self {
        let mut idx = Self::default();
        for doc in docs {
            for tok in doc {
                let tok = tok.as_ref();
                if !idx.lookup.contains_key(tok) {
                    idx.lookup.insert(tok.to_string(), idx.features.len());
                    idx.features.push(tok.to_string());
                }
            }
        }
        idx
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// Count vector; unknown tokens are dropped.
    pub fn transform<S: AsRef<str>>(&self, doc: &[S]) -> SparseVec {
        let mut counts: HashMap<usize, f64> = HashMap::new();
        for tok in doc {
            if let Some(&i) = self.lookup.get(tok.as_ref()) {
                *counts.entry(i).or_default() += 1.0;
            }
        }
        let mut v: SparseVec = counts.into_iter().collect();
        v.sort_unstable_by_key(|e| e.0);
        v
    }
}

/// Fits the index on `train` and returns count vectors for both sets.
pub fn unigram_features<S: AsRef<str>>(
    train: &[Vec<S>],
    other: &[Vec<S>],
) -> (UnigramIndex, Vec<SparseVec>, Vec<SparseVec>) {
    let idx = UnigramIndex::fit(train);
    let a = train.iter().map(|d| idx.transform(d)).collect();
    let b = other.iter().map(|d| idx.transform(d)).collect();
    (idx, a, b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    pub iterations: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self { iterations: 300 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    /// n_classes × n_features.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub c: f64,
}

fn dot(w: &[f64], x: &SparseVec) -> f64 {
    x.iter().map(|&(i, v)| w[i] * v).sum()
}

fn train_binary(
    xs: &[SparseVec],
    ys: &[f64],
    dim: usize,
    c: f64,
    iterations: usize,
) -> (Vec<f64>, f64) {
    let lambda = 1.0 / c;
    let radius = 1.0 / lambda.sqrt();
    let n = xs.len() as f64;
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut w_avg = vec![0.0; dim];
    let mut b_avg = 0.0;
    let mut averaged = 0usize;
    let mut grad = vec![0.0; dim];
    let start_avg = iterations / 2;
    for t in 1..=iterations {
        grad.fill(0.0);
        let mut g_b = 0.0;
        for (x, &y) in xs.iter().zip(ys) {
            if y * (dot(&w, x) + b) < 1.0 {
                for &(i, v) in x {
                    grad[i] -= y * v / n;
                }
                g_b -= y / n;
            }
        }
        let eta = 1.0 / (lambda * t as f64);
        for (wi, gi) in w.iter_mut().zip(&grad) {
            *wi -= eta * (lambda * *wi + gi);
        }
        b -= eta * g_b;
        let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > radius {
            let s = radius / norm;
            w.iter_mut().for_each(|v| *v *= s);
        }
        if t > start_avg {
            averaged += 1;
            let k = averaged as f64;
            for (a, v) in w_avg.iter_mut().zip(&w) {
                *a += (v - *a) / k;
            }
            b_avg += (b - b_avg) / k;
        }
    }
    (w_avg, b_avg)
}

impl SvmModel {
    pub fn train(
        xs: &[SparseVec],
        labels: &[usize],
        n_classes: usize,
        dim: usize,
        c: f64,
        cfg: SvmConfig,
    ) -> Result<Self> {
        if xs.len() != labels.len() || xs.is_empty() {
            return Err(Error::InvalidArgument(
                "SVM needs equally many, non-zero documents and labels".into(),
            ));
        }
        if c.is_nan() || c <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "C must be positive, got {c}"
            )));
        }
        if cfg.iterations == 0 {
            return Err(Error::InvalidArgument(
                "SVM needs at least one iteration".into(),
            ));
        }
        let mut present = vec![false; n_classes];
        for &l in labels {
            *present.get_mut(l).ok_or_else(|| {
                Error::InvalidArgument(format!("label {l} outside {n_classes} classes"))
            })? = true;
        }
        if present.iter().filter(|&&p| p).count() < 2 {
            return Err(Error::InvalidArgument(
                "SVM training set contains a single class".into(),
            ));
        }
        let mut weights = Array2::zeros((n_classes, dim));
        let mut bias = Array1::zeros(n_classes);
        for k in 0..n_classes {
            let ys: Vec<f64> = labels
                .iter()
                .map(|&l| if l == k { 1.0 } else { -1.0 })
                .collect();
            let (w, b) = train_binary(xs, &ys, dim, c, cfg.iterations);
            weights.row_mut(k).assign(&Array1::from(w));
            bias[k] = b;
        }
        Ok(Self { weights, bias, c })
    }

    pub fn scores(&self, x: &SparseVec) -> Array1<f64> {
        let mut s = self.bias.clone();
        for &(i, v) in x {
            if i < self.weights.ncols() {
                s.scaled_add(v, &self.weights.column(i));
            }
        }
        s
    }

    /// Highest-scoring class; ties go to the lowest index.
    pub fn predict(&self, x: &SparseVec) -> usize {
        crate::model::argmax(&self.scores(x))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmSelection {
    pub model: SvmModel,
    pub index: UnigramIndex,
    /// `(C, dev weighted F1 ×100)` for every grid point, in grid order.
    pub grid: Vec<(f64, f64)>,
}

/// Grid search over `c_grid`, keeping the first C with the best dev
/// weighted F1.
pub fn svm_baseline<S: AsRef<str>>(
    train: &[Vec<S>],
    train_labels: &[usize],
    dev: &[Vec<S>],
    dev_labels: &[usize],
    n_classes: usize,
    c_grid: &[f64],
    cfg: SvmConfig,
) -> Result<SvmSelection> {
    if c_grid.is_empty() {
        return Err(Error::InvalidArgument("empty C grid".into()));
    }
    if dev.len() != dev_labels.len() {
        return Err(Error::InvalidArgument(
            "dev documents and labels differ in length".into(),
        ));
    }
    let (index, xtr, xdev) = unigram_features(train, dev);
    let classes: Vec<String> = (0..n_classes).map(|c| c.to_string()).collect();
    let mut best: Option<(f64, SvmModel)> = None;
    let mut grid = Vec::with_capacity(c_grid.len());
    for &c in c_grid {
        let model = SvmModel::train(&xtr, train_labels, n_classes, index.len(), c, cfg)?;
        let pred: Vec<usize> = xdev.iter().map(|x| model.predict(x)).collect();
        let f1 = weighted_metrics(dev_labels, &pred, &classes)?.weighted.f1;
        log::info!("svm C={c}: dev weighted F1 {f1:.2}");
        grid.push((c, f1));
        if best.as_ref().is_none_or(|(b, _)| f1 > *b) {
            best = Some((f1, model));
        }
    }
    let (_, model) = best.expect("grid is non-empty");
    Ok(SvmSelection { model, index, grid })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clouds() -> (Vec<Vec<String>>, Vec<usize>) {
        let pos = ["great", "love", "nice", "happy"];
        let neg = ["awful", "hate", "stupid", "ugly"];
        let filler = ["the", "a", "is", "it"];
        let mut docs = Vec::new();
        let mut labels = Vec::new();
        for i in 0..40 {
            let (words, label) = if i % 2 == 0 { (&pos, 0) } else { (&neg, 1) };
            let doc = vec![
                words[i % 4].to_string(),
                filler[i % 4].to_string(),
                words[(i / 4) % 4].to_string(),
                filler[(i + 1) % 4].to_string(),
            ];
            docs.push(doc);
            labels.push(label);
        }
        (docs, labels)
    }

    #[test]
    fn separable_clouds_are_learned() {
        let (docs, labels) = clouds();
        let (train, dev) = docs.split_at(30);
        let sel = svm_baseline(
            train,
            &labels[..30],
            dev,
            &labels[30..],
            2,
            &DEFAULT_C_GRID,
            SvmConfig::default(),
        )
        .unwrap();
        let best = sel.grid.iter().find(|g| g.0 == sel.model.c).unwrap();
        assert_eq!(best.1, 100.0);
        for (d, &l) in dev.iter().zip(&labels[30..]) {
            assert_eq!(sel.model.predict(&sel.index.transform(d)), l);
        }
    }

    #[test]
    fn single_grid_point_is_chosen() {
        let (docs, labels) = clouds();
        let sel = svm_baseline(
            &docs,
            &labels,
            &docs,
            &labels,
            2,
            &[0.5],
            SvmConfig::default(),
        )
        .unwrap();
        assert_eq!(sel.model.c, 0.5);
        assert_eq!(sel.grid.len(), 1);
    }

    #[test]
    fn duplicating_the_training_set_changes_nothing() {
        let (docs, labels) = clouds();
        let idx = UnigramIndex::fit(&docs);
        let xs: Vec<SparseVec> = docs.iter().map(|d| idx.transform(d)).collect();
        let a = SvmModel::train(&xs, &labels, 2, idx.len(), 1.0, SvmConfig::default()).unwrap();
        let xs2: Vec<SparseVec> = xs.iter().chain(&xs).cloned().collect();
        let l2: Vec<usize> = labels.iter().chain(&labels).copied().collect();
        let b = SvmModel::train(&xs2, &l2, 2, idx.len(), 1.0, SvmConfig::default()).unwrap();
        for x in &xs {
            assert_eq!(a.predict(x), b.predict(x));
            let (sa, sb) = (a.scores(x), b.scores(x));
            assert!((&sa - &sb).iter().all(|d| d.abs() < 1e-9));
        }
    }

    #[test]
    fn single_class_is_an_error() {
        let xs = vec![vec![(0, 1.0)], vec![(1, 1.0)]];
        assert!(SvmModel::train(&xs, &[1, 1], 2, 2, 1.0, SvmConfig::default()).is_err());
    }

    #[test]
    fn counts_and_unknown_tokens() {
        let idx = UnigramIndex::fit(&[vec!["a", "b"]]);
        assert_eq!(
            idx.transform(&["b", "zzz", "b", "a"]),
            vec![(0, 1.0), (1, 2.0)]
        );
    }
}
