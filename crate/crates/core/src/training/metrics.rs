use serde::{Deserialize, Serialize};

use crate::autodiff::tensor::log_softmax;
use crate::autodiff::Tensor;
use crate::engine::{ChoiceBatch, NestGnn};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// How per-class F1 scores are combined.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum F1Averaging {
    /// Unweighted mean over all classes.
    #[default]
    Macro,
    /// Mean weighted by true-class support.
    Weighted,
}

/// Fit statistics of one data split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub n: usize,
    /// Sum of log-probabilities of the chosen alternatives.
    pub log_likelihood: f64,
    pub accuracy: f64,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub train: SplitMetrics,
    pub test: SplitMetrics,
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// F1 score over `classes` classes from predicted and true labels.
pub fn f1_score(pred: &[usize], truth: &[usize], classes: usize, averaging: F1Averaging) -> f64 {
    let mut tp = vec![0usize; classes];
    let mut fp = vec![0usize; classes];
    let mut fnn = vec![0usize; classes];
    for (&p, &t) in pred.iter().zip(truth) {
        if p == t {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fnn[t] += 1;
        }
    }
    let per_class: Vec<f64> = (0..classes)
        .map(|c| {
            let denom = 2 * tp[c] + fp[c] + fnn[c];
            if denom == 0 {
                0.0
            } else {
                2.0 * tp[c] as f64 / denom as f64
            }
        })
        .collect();
    match averaging {
        F1Averaging::Macro => per_class.iter().sum::<f64>() / classes as f64,
        F1Averaging::Weighted => {
            let n = truth.len().max(1) as f64;
            (0..classes)
                .map(|c| per_class[c] * (tp[c] + fnn[c]) as f64 / n)
                .sum()
        }
    }
}

/// Metrics from `[rows, alternatives]` log-probabilities.
pub fn metrics_from_log_probabilities<T: Scalar>(
    log_p: &Tensor<T>,
    labels: &[usize],
    averaging: F1Averaging,
) -> Result<SplitMetrics> {
    if log_p.rows() != labels.len() {
        return Err(Error::shape("metrics", log_p.shape(), &[labels.len()]));
    }
    let classes = log_p.cols();
    if let Some(&y) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::usage(format!("label {y} out of range for {classes} alternatives")));
    }
    let pred: Vec<usize> = (0..labels.len()).map(|r| argmax(log_p.row(r))).collect();
    let correct = pred.iter().zip(labels).filter(|(p, t)| p == t).count();
    let log_likelihood = labels
        .iter()
        .enumerate()
        .map(|(r, &y)| log_p.at(r, y).to_f64_lossy())
        .sum();
    Ok(SplitMetrics {
        n: labels.len(),
        log_likelihood,
        accuracy: correct as f64 / labels.len().max(1) as f64,
        f1: f1_score(&pred, labels, classes, averaging),
    })
}

/// Evaluates a model on one split.
pub fn evaluate<T: Scalar>(model: &NestGnn<T>, batch: &ChoiceBatch<T>, averaging: F1Averaging) -> Result<SplitMetrics> {
    let log_p = log_softmax(&model.utilities(batch)?);
    metrics_from_log_probabilities(&log_p, &batch.labels, averaging)
}

/// Evaluates a model on the training and test splits.
pub fn evaluate_report<T: Scalar>(
    model: &NestGnn<T>,
    train: &ChoiceBatch<T>,
    test: &ChoiceBatch<T>,
    averaging: F1Averaging,
) -> Result<MetricsReport> {
    Ok(MetricsReport {
        train: evaluate(model, train, averaging)?,
        test: evaluate(model, test, averaging)?,
    })
}
