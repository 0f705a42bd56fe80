//! Confusion counts and precision / recall / F1.

use std::fmt;

/// Binary classification metrics. Any ratio whose denominator is zero is
/// defined as 0.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Metrics {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Harmonic mean of precision and recall, 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    let s = precision + recall;
    if s == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / s
    }
}

impl Metrics {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        Metrics {
            tp,
            fp,
            fn_,
            tn,
            precision,
            recall,
            f1: f1_score(precision, recall),
        }
    }

    /// Counts `(predicted, actual)` label pairs.
    pub fn from_labels(pairs: impl IntoIterator<Item = (bool, bool)>) -> Self {
        let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
        for (pred, actual) in pairs {
            match (pred, actual) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => tn += 1,
            }
        }
        Self::from_counts(tp, fp, fn_, tn)
    }

    /// Thresholds probabilities: `p >= threshold` predicts the positive class.
    pub fn from_probabilities(probs: &[f64], labels: &[u8], threshold: f64) -> Self {
        Self::from_labels(probs.iter().zip(labels).map(|(&p, &l)| (p >= threshold, l == 1)))
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.total())
    }
}

/// `P=0.50 R=1.00 F1=0.67`, two decimals each.
impl fmt::Display for Metrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P={:.2} R={:.2} F1={:.2}", self.precision, self.recall, self.f1)
    }
}
