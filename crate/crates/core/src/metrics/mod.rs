//! Confusion matrices, accuracy/precision/recall/F-measure, ROC curves and
//! the search that recovers integer confusion matrices from rounded metric
//! tables.

mod reconstruct;
mod roc;

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

pub use reconstruct::{
    reconstruct_confusion, reconstruct_multiclass, ClassTargets, MetricTargets, MultiSearch, SearchBudget,
    SearchStatus, Target,
};
pub use roc::{roc_from_confusions, roc_from_scores, trapezoid_auc, RocCurve, RocPoint};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("confusion matrix is empty")]
    Empty,
    #[error("unknown class `{0}`")]
    UnknownClass(String),
    #[error("matrix must be square with at least two classes")]
    BadShape,
    #[error("ROC needs at least one positive and one negative sample")]
    SingleClass,
    #[error("confusion sequence is not monotone in the threshold")]
    NotMonotone,
}

/// Binary tallies; `n = tp + tn + fp + fn`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BinaryConfusion {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl BinaryConfusion {
    pub const fn new(tp: u64, tn: u64, fp: u64, fn_: u64) -> Self {
        Self { tp, tn, fp, fn_ }
    }

    pub fn n(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn positives(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> u64 {
        self.tn + self.fp
    }

    /// The same outcomes seen with the other class as "positive".
    pub fn swapped(&self) -> Self {
        Self {
            tp: self.tn,
            tn: self.tp,
            fp: self.fn_,
            fn_: self.fp,
        }
    }

    pub fn metrics<T: Scalar>(&self) -> Result<MetricSet<T>, MetricsError> {
        metrics_from_binary(self)
    }
}

/// Accuracy, precision, recall and F-measure. `None` marks a 0/0 case.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSet<T> {
    pub accuracy: Option<T>,
    pub precision: Option<T>,
    pub recall: Option<T>,
    pub f_measure: Option<T>,
}

impl<T: Scalar> MetricSet<T> {
    pub fn as_array(&self) -> [Option<T>; 4] {
        [self.accuracy, self.precision, self.recall, self.f_measure]
    }

    pub fn to_f64(&self) -> MetricSet<f64> {
        MetricSet {
            accuracy: self.accuracy.map(Scalar::to_f64),
            precision: self.precision.map(Scalar::to_f64),
            recall: self.recall.map(Scalar::to_f64),
            f_measure: self.f_measure.map(Scalar::to_f64),
        }
    }

    /// Every defined value rounded half away from zero.
    pub fn rounded(&self, decimals: u32) -> MetricSet<f64> {
        let r = |v: Option<T>| v.map(|v| crate::scalar::round_half_away(v.to_f64(), decimals));
        MetricSet {
            accuracy: r(self.accuracy),
            precision: r(self.precision),
            recall: r(self.recall),
            f_measure: r(self.f_measure),
        }
    }
}

fn ratio<T: Scalar>(num: u64, den: u64) -> Option<T> {
    (den > 0).then(|| T::from_ratio(num, den))
}

/// A = (TP+TN)/n, P = TP/(TP+FP), R = TP/(TP+FN), F = 2PR/(P+R).
///
/// F is evaluated as 2TP/(2TP+FP+FN), which equals the harmonic mean whenever
/// P and R are both defined and takes the value 0 when P = R = 0.
pub fn metrics_from_binary<T: Scalar>(m: &BinaryConfusion) -> Result<MetricSet<T>, MetricsError> {
    let n = m.n();
    if n == 0 {
        return Err(MetricsError::Empty);
    }
    let precision = ratio(m.tp, m.tp + m.fp);
    let recall = ratio(m.tp, m.tp + m.fn_);
    let f_measure = match (precision, recall) {
        (Some(_), Some(_)) => ratio(2 * m.tp, 2 * m.tp + m.fp + m.fn_),
        _ => None,
    };
    Ok(MetricSet {
        accuracy: ratio(m.tp + m.tn, n),
        precision,
        recall,
        f_measure,
    })
}

/// K x K tallies; rows are true classes, columns predicted classes.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MultiConfusion {
    labels: Vec<String>,
    counts: Vec<Vec<u64>>,
}

impl MultiConfusion {
    pub fn new(labels: Vec<String>, counts: Vec<Vec<u64>>) -> Result<Self, MetricsError> {
        let k = labels.len();
        if k < 2 || counts.len() != k || counts.iter().any(|row| row.len() != k) {
            return Err(MetricsError::BadShape);
        }
        Ok(Self { labels, counts })
    }

    pub fn zeros(labels: Vec<String>) -> Result<Self, MetricsError> {
        let k = labels.len();
        Self::new(labels, vec![vec![0; k]; k])
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn k(&self) -> usize {
        self.labels.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn add(&mut self, truth: usize, predicted: usize) {
        self.counts[truth][predicted] += 1;
    }

    pub fn row_sum(&self, c: usize) -> u64 {
        self.counts[c].iter().sum()
    }

    pub fn col_sum(&self, c: usize) -> u64 {
        self.counts.iter().map(|row| row[c]).sum()
    }

    /// Class `c` against the rest.
    pub fn one_vs_rest(&self, c: usize) -> BinaryConfusion {
        let tp = self.counts[c][c];
        let fn_ = self.row_sum(c) - tp;
        let fp = self.col_sum(c) - tp;
        let tn = self.total() - tp - fn_ - fp;
        BinaryConfusion { tp, tn, fp, fn_ }
    }

    pub fn per_class_metrics<T: Scalar>(&self, label: &str) -> Result<MetricSet<T>, MetricsError> {
        let c = self.index_of(label).ok_or_else(|| MetricsError::UnknownClass(label.to_string()))?;
        metrics_from_binary(&self.one_vs_rest(c))
    }
}
