//! Classification metrics, reference rows and baselines.
//!
//! Precision, recall and F1 are stored as percentages (×100) without
//! rounding; the table formatters round to one decimal. A zero denominator
//! yields 0 for that metric.

mod svm;
mod ttest;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use svm::{
    svm_baseline, unigram_features, SparseVec, SvmConfig, SvmModel, SvmSelection, UnigramIndex,
    DEFAULT_C_GRID,
};
pub use ttest::{paired_t_test, TTest};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: Option<String>,
    pub per_class: Vec<ClassMetrics>,
    /// Support-weighted averages.
    pub weighted: Aggregate,
    /// `confusion[gold][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub n: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Per-class and support-weighted precision, recall and F1 for label
/// indices into `classes`.
pub fn weighted_metrics<S: AsRef<str>>(
    gold: &[usize],
    pred: &[usize],
    classes: &[S],
) -> Result<EvalReport> {
    if gold.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot score an empty prediction set".into(),
        ));
    }
    if gold.len() != pred.len() {
        return Err(Error::InvalidArgument(format!(
            "{} gold labels but {} predictions",
            gold.len(),
            pred.len()
        )));
    }
    let k = classes.len();
    if let Some(bad) = gold.iter().chain(pred).find(|&&l| l >= k) {
        return Err(Error::InvalidArgument(format!(
            "label {bad} outside {k} classes"
        )));
    }
    let mut confusion = vec![vec![0usize; k]; k];
    for (&g, &p) in gold.iter().zip(pred) {
        confusion[g][p] += 1;
    }
    let n = gold.len();
    let mut per_class = Vec::with_capacity(k);
    let mut weighted = Aggregate {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
    };
    for c in 0..k {
        let tp = confusion[c][c];
        let support: usize = confusion[c].iter().sum();
        let predicted: usize = confusion.iter().map(|row| row[c]).sum();
        let p = ratio(tp, predicted);
        let r = ratio(tp, support);
        let f = f1(p, r);
        let w = support as f64 / n as f64;
        weighted.precision += w * p;
        weighted.recall += w * r;
        weighted.f1 += w * f;
        per_class.push(ClassMetrics {
            class: classes[c].as_ref().to_string(),
            precision: 100.0 * p,
            recall: 100.0 * r,
            f1: 100.0 * f,
            support,
        });
    }
    weighted.precision *= 100.0;
    weighted.recall *= 100.0;
    weighted.f1 *= 100.0;
    Ok(EvalReport {
        task: None,
        per_class,
        weighted,
        confusion,
        n,
    })
}

/// Scores the constant prediction `label` against `gold`.
pub fn trivial_baseline<S: AsRef<str>>(
    classes: &[S],
    label: usize,
    gold: &[usize],
) -> Result<EvalReport> {
    if label >= classes.len() {
        return Err(Error::InvalidArgument(format!(
            "label {label} outside {} classes",
            classes.len()
        )));
    }
    weighted_metrics(gold, &vec![label; gold.len()], classes)
}

impl EvalReport {
    pub fn with_task(mut self, task: impl Into<String>) -> Self {
        self.task = Some(task.into());
        self
    }

    /// Unweighted mean of per-class F1, ×100.
    pub fn macro_f1(&self) -> f64 {
        self.per_class.iter().map(|c| c.f1).sum::<f64>() / self.per_class.len() as f64
    }

    pub fn accuracy(&self) -> f64 {
        let correct: usize = (0..self.confusion.len())
            .map(|c| self.confusion[c][c])
            .sum();
        100.0 * correct as f64 / self.n as f64
    }

    pub fn row(&self, system: impl Into<String>) -> TableRow {
        TableRow {
            system: system.into(),
            precision: self.weighted.precision,
            recall: self.weighted.recall,
            f1: self.weighted.f1,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// One line of a comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub system: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn format_table(rows: &[TableRow]) -> String {
    let width = rows
        .iter()
        .map(|r| r.system.chars().count())
        .max()
        .unwrap_or(0)
        .max("System".len());
    let mut out = format!(
        "{:<width$}  {:>9}  {:>6}  {:>5}\n",
        "System", "Precision", "Recall", "F1"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<width$}  {:>9.1}  {:>6.1}  {:>5.1}",
            r.system, r.precision, r.recall, r.f1
        );
    }
    out
}

pub fn format_csv(rows: &[TableRow]) -> String {
    let mut out = String::from("system,precision,recall,f1\n");
    for r in rows {
        let name = if r.system.contains([',', '"']) {
            format!("\"{}\"", r.system.replace('"', "\"\""))
        } else {
            r.system.clone()
        };
        let _ = writeln!(out, "{name},{:.1},{:.1},{:.1}", r.precision, r.recall, r.f1);
    }
    out
}
