//! Per-class annotation metrics: precision and recall per tag, their
//! unweighted means over the classes present in the ground truth, the
//! F-measure of those means, and N+ (classes recalled at least once).

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use serde::Serialize;

use crate::data::Example;
use crate::error::{Error, Result};
use crate::inference::{annotate_dataset, DecodePolicy};
use crate::model::{ModelConfig, Parameters};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    /// `correct / predicted`, 0 for classes never predicted.
    pub per_class_precision: Vec<f64>,
    /// `correct / support`, 0 for classes absent from the ground truth.
    pub per_class_recall: Vec<f64>,
    /// Classes with non-zero support; only these enter the averages.
    pub included: Vec<bool>,
    pub support: Vec<usize>,
    pub prediction_counts: Vec<usize>,
    pub correct_counts: Vec<usize>,
    pub mean_precision: f64,
    pub mean_recall: f64,
    pub f_measure: f64,
    pub n_plus: usize,
    pub excluded_classes: usize,
}

impl Metrics {
    /// Builds the aggregate figures from per-class tallies.
    pub fn from_counts(correct: Vec<usize>, predicted: Vec<usize>, support: Vec<usize>) -> Self {
        let classes = support.len();
        let mut precision = vec![0.0; classes];
        let mut recall = vec![0.0; classes];
        let included: Vec<bool> = support.iter().map(|&s| s > 0).collect();
        for c in 0..classes {
            if predicted[c] > 0 {
                precision[c] = correct[c] as f64 / predicted[c] as f64;
            }
            if support[c] > 0 {
                recall[c] = correct[c] as f64 / support[c] as f64;
            }
        }
        let n_included = included.iter().filter(|&&b| b).count();
        let mean = |values: &[f64]| {
            if n_included == 0 {
                0.0
            } else {
                values
                    .iter()
                    .zip(&included)
                    .filter(|(_, &inc)| inc)
                    .map(|(v, _)| v)
                    .sum::<f64>()
                    / n_included as f64
            }
        };
        let mean_precision = mean(&precision);
        let mean_recall = mean(&recall);
        let f_measure = if mean_precision + mean_recall > 0.0 {
            2.0 * mean_precision * mean_recall / (mean_precision + mean_recall)
        } else {
            0.0
        };
        let n_plus = (0..classes).filter(|&c| included[c] && recall[c] > 0.0).count();
        Metrics {
            per_class_precision: precision,
            per_class_recall: recall,
            included,
            support,
            prediction_counts: predicted,
            correct_counts: correct,
            mean_precision,
            mean_recall,
            f_measure,
            n_plus,
            excluded_classes: classes - n_included,
        }
    }

    /// `(P, R, F)` as rounded integer percentages, plus N+.
    pub fn percentages(&self) -> (u32, u32, u32, usize) {
        let pct = |v: f64| (100.0 * v).round() as u32;
        (
            pct(self.mean_precision),
            pct(self.mean_recall),
            pct(self.f_measure),
            self.n_plus,
        )
    }
}

impl fmt::Display for Metrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (p, r, fm, n) = self.percentages();
        write!(
            f,
            "P {p:>3}  R {r:>3}  F {fm:>3}  N+ {n:>4}   (P {:.4}, R {:.4}, F {:.4}; {} classes excluded)",
            self.mean_precision, self.mean_recall, self.f_measure, self.excluded_classes
        )
    }
}

/// Scores predicted tag sets against ground-truth tag sets, both keyed by
/// example id. Ground-truth examples without a prediction count as having
/// predicted nothing.
pub fn evaluate(
    predictions: &BTreeMap<String, Vec<usize>>,
    ground_truth: &BTreeMap<String, Vec<usize>>,
    tag_count: usize,
) -> Result<Metrics> {
    if ground_truth.is_empty() {
        return Err(Error::Eval("ground truth is empty".into()));
    }
    let mut correct = vec![0usize; tag_count];
    let mut predicted = vec![0usize; tag_count];
    let mut support = vec![0usize; tag_count];
    let check = |t: usize| {
        if t < tag_count {
            Ok(t)
        } else {
            Err(Error::Index {
                context: "tag class",
                index: t,
                limit: tag_count,
            })
        }
    };
    for id in predictions.keys() {
        if !ground_truth.contains_key(id) {
            return Err(Error::Eval(format!("prediction for unknown example {id:?}")));
        }
    }
    let mut truth_set = vec![false; tag_count];
    for (id, truth) in ground_truth {
        truth_set.iter_mut().for_each(|b| *b = false);
        for &t in truth {
            truth_set[check(t)?] = true;
        }
        for (c, &present) in truth_set.iter().enumerate() {
            if present {
                support[c] += 1;
            }
        }
        let mut seen = vec![false; tag_count];
        for &t in predictions.get(id).map(Vec::as_slice).unwrap_or_default() {
            let t = check(t)?;
            if std::mem::replace(&mut seen[t], true) {
                continue;
            }
            predicted[t] += 1;
            if truth_set[t] {
                correct[t] += 1;
            }
        }
    }
    Ok(Metrics::from_counts(correct, predicted, support))
}

/// Decodes `examples` and scores the result against their tag sets.
pub fn evaluate_model(
    params: &Parameters,
    config: &ModelConfig,
    examples: &[Example],
    policy: DecodePolicy,
) -> Result<Metrics> {
    let predictions = annotate_dataset(params, config, examples, policy)?
        .into_iter()
        .map(|(id, d)| (id, d.tags))
        .collect();
    evaluate(&predictions, &ground_truth(examples), config.tag_count)
}

pub fn ground_truth(examples: &[Example]) -> BTreeMap<String, Vec<usize>> {
    examples.iter().map(|e| (e.id.clone(), e.tags.clone())).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub rows: Vec<(String, Metrics)>,
}

pub fn compare_orders(entries: Vec<(String, Metrics)>) -> Result<ComparisonTable> {
    if entries.is_empty() {
        return Err(Error::Eval("nothing to compare".into()));
    }
    Ok(ComparisonTable { rows: entries })
}

impl ComparisonTable {
    /// `method,P,R,F,N+` with ratio columns.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("method,P,R,F,N+\n");
        for (label, m) in &self.rows {
            let _ = writeln!(
                s,
                "{label},{},{},{},{}",
                m.mean_precision, m.mean_recall, m.f_measure, m.n_plus
            );
        }
        s
    }
}

impl fmt::Display for ComparisonTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.rows.iter().map(|(l, _)| l.len()).max().unwrap_or(0).max(6);
        writeln!(f, "{:<width$}  {:>4} {:>4} {:>4} {:>5}", "method", "P", "R", "F", "N+")?;
        for (i, (label, m)) in self.rows.iter().enumerate() {
            let (p, r, fm, n) = m.percentages();
            write!(f, "{label:<width$}  {p:>4} {r:>4} {fm:>4} {n:>5}")?;
            if i + 1 < self.rows.len() {
                writeln!(f)?;
            }
        }
        Ok(())
    }
}
