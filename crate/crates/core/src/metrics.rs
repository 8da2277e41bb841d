//! Accuracy, macro-averaged precision/recall and the F-beta combination of
//! the two macro averages, all read off one confusion matrix.
//!
//! A class whose precision (or recall) denominator is zero contributes 0 to
//! the macro mean, and F is 0 when its denominator is 0.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows are true classes, columns predicted classes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    labels: Vec<String>,
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn true_positives(&self, class: usize) -> u64 {
        self.counts[class][class]
    }

    pub fn false_positives(&self, class: usize) -> u64 {
        self.counts.iter().map(|row| row[class]).sum::<u64>() - self.true_positives(class)
    }

    pub fn false_negatives(&self, class: usize) -> u64 {
        self.counts[class].iter().sum::<u64>() - self.true_positives(class)
    }

    fn trace(&self) -> u64 {
        (0..self.labels.len()).map(|i| self.counts[i][i]).sum()
    }

    fn require_samples(&self) -> Result<()> {
        if self.total() == 0 {
            return Err(Error::EmptyEvaluationSet);
        }
        Ok(())
    }
}

pub fn confusion<T, P, L>(y_true: &[T], y_pred: &[P], labels: &[L]) -> Result<ConfusionMatrix>
where
    T: AsRef<str>,
    P: AsRef<str>,
    L: AsRef<str>,
{
    if y_true.len() != y_pred.len() {
        return Err(Error::LengthMismatch(y_true.len(), y_pred.len()));
    }
    let mut index: HashMap<&str, usize> = HashMap::new();
    for (i, l) in labels.iter().enumerate() {
        if index.insert(l.as_ref(), i).is_some() {
            return Err(Error::InvalidParameter(format!("duplicate class {:?}", l.as_ref())));
        }
    }
    let lookup = |s: &str| index.get(s).copied().ok_or_else(|| Error::UnknownLabel(s.to_string()));
    let k = labels.len();
    let mut counts = vec![vec![0u64; k]; k];
    for (t, p) in y_true.iter().zip(y_pred) {
        counts[lookup(t.as_ref())?][lookup(p.as_ref())?] += 1;
    }
    Ok(ConfusionMatrix {
        labels: labels.iter().map(|l| l.as_ref().to_string()).collect(),
        counts,
    })
}

/// Fraction of samples on the diagonal.
pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    cm.require_samples()?;
    Ok(cm.trace() as f64 / cm.total() as f64)
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn macro_mean(cm: &ConfusionMatrix, per_class: impl Fn(usize) -> f64) -> f64 {
    let k = cm.labels.len();
    if k == 0 {
        return 0.0;
    }
    (0..k).map(per_class).sum::<f64>() / k as f64
}

pub fn macro_precision(cm: &ConfusionMatrix) -> Result<f64> {
    cm.require_samples()?;
    Ok(macro_mean(cm, |i| {
        let tp = cm.true_positives(i);
        ratio(tp, tp + cm.false_positives(i))
    }))
}

pub fn macro_recall(cm: &ConfusionMatrix) -> Result<f64> {
    cm.require_samples()?;
    Ok(macro_mean(cm, |i| {
        let tp = cm.true_positives(i);
        ratio(tp, tp + cm.false_negatives(i))
    }))
}

/// `(β² + 1)·P·R / (β²·P + R)`.
pub fn f_score(precision: f64, recall: f64, beta: f64) -> Result<f64> {
    if !beta.is_finite() || beta <= 0.0 {
        return Err(Error::InvalidBeta(beta));
    }
    let b2 = beta * beta;
    let den = b2 * precision + recall;
    if den == 0.0 {
        return Ok(0.0);
    }
    Ok((b2 + 1.0) * precision * recall / den)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub f_score: f64,
    pub beta: f64,
}

impl MetricReport {
    pub fn from_confusion(cm: &ConfusionMatrix, beta: f64) -> Result<Self> {
        let macro_precision = macro_precision(cm)?;
        let macro_recall = macro_recall(cm)?;
        Ok(MetricReport {
            accuracy: accuracy(cm)?,
            macro_precision,
            macro_recall,
            f_score: f_score(macro_precision, macro_recall, beta)?,
            beta,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

pub fn evaluate<T, P, L>(y_true: &[T], y_pred: &[P], labels: &[L], beta: f64) -> Result<MetricReport>
where
    T: AsRef<str>,
    P: AsRef<str>,
    L: AsRef<str>,
{
    if !beta.is_finite() || beta <= 0.0 {
        return Err(Error::InvalidBeta(beta));
    }
    MetricReport::from_confusion(&confusion(y_true, y_pred, labels)?, beta)
}
