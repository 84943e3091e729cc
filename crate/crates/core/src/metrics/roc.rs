use serde::ser::{SerializeStruct, Serializer};
use serde::Serialize;

use super::{BinaryConfusion, MetricsError};
use crate::scalar::Scalar;

/// One operating point. Sentinel thresholds are `+inf` (nothing predicted
/// positive) and `-inf` (everything predicted positive).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RocPoint<T> {
    pub fpr: T,
    pub tpr: T,
    pub threshold: f64,
}

/// Points run from (0,0) to (1,1) with both rates non-decreasing.
#[derive(Clone, Debug, PartialEq)]
pub struct RocCurve<T> {
    points: Vec<RocPoint<T>>,
    auc: T,
}

impl<T: Scalar> RocCurve<T> {
    pub fn points(&self) -> &[RocPoint<T>] {
        &self.points
    }

    pub fn auc(&self) -> T {
        self.auc
    }

    /// `threshold,fpr,tpr` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,fpr,tpr\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{}\n", p.threshold, p.fpr.to_f64(), p.tpr.to_f64()));
        }
        out
    }
}

impl<T: Scalar> Serialize for RocCurve<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let points: Vec<(f64, f64, Option<f64>)> = self
            .points
            .iter()
            .map(|p| (p.fpr.to_f64(), p.tpr.to_f64(), p.threshold.is_finite().then_some(p.threshold)))
            .collect();
        let mut s = serializer.serialize_struct("RocCurve", 2)?;
        s.serialize_field("points", &points)?;
        s.serialize_field("auc", &self.auc.to_f64())?;
        s.end()
    }
}

/// Area under a piecewise-linear curve.
pub fn trapezoid_auc<T: Scalar>(points: &[RocPoint<T>]) -> T {
    points.windows(2).fold(T::zero(), |acc, w| {
        acc + (w[1].fpr - w[0].fpr) * (w[0].tpr + w[1].tpr) * T::half()
    })
}

/// Builds a curve from confusion matrices listed from the highest threshold
/// to the lowest. Every matrix must cover the same positives and negatives.
pub fn roc_from_confusions<T: Scalar>(steps: &[(f64, BinaryConfusion)]) -> Result<RocCurve<T>, MetricsError> {
    let Some((_, first)) = steps.first() else {
        return Err(MetricsError::SingleClass);
    };
    let (pos, neg) = (first.positives(), first.negatives());
    if pos == 0 || neg == 0 {
        return Err(MetricsError::SingleClass);
    }

    let mut points = Vec::with_capacity(steps.len() + 2);
    if first.tp != 0 || first.fp != 0 {
        points.push(RocPoint {
            fpr: T::zero(),
            tpr: T::zero(),
            threshold: f64::INFINITY,
        });
    }
    let mut prev = (0u64, 0u64);
    for (threshold, m) in steps {
        if m.positives() != pos || m.negatives() != neg {
            return Err(MetricsError::NotMonotone);
        }
        if m.fp < prev.0 || m.tp < prev.1 {
            return Err(MetricsError::NotMonotone);
        }
        prev = (m.fp, m.tp);
        points.push(RocPoint {
            fpr: T::from_ratio(m.fp, neg),
            tpr: T::from_ratio(m.tp, pos),
            threshold: *threshold,
        });
    }
    if prev != (neg, pos) {
        points.push(RocPoint {
            fpr: T::one(),
            tpr: T::one(),
            threshold: f64::NEG_INFINITY,
        });
    }
    let auc = trapezoid_auc(&points);
    Ok(RocCurve { points, auc })
}

/// Sweeps an inclusive threshold (`score >= t`) over every distinct score.
/// Tied scores share one threshold, so a tie between a positive and a
/// negative contributes half a pair to the area.
pub fn roc_from_scores<T: Scalar>(samples: &[(f64, bool)]) -> Result<RocCurve<T>, MetricsError> {
    let pos = samples.iter().filter(|s| s.1).count() as u64;
    let neg = samples.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(MetricsError::SingleClass);
    }
    let mut sorted: Vec<(f64, bool)> = samples.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut steps = Vec::new();
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == t {
            if sorted[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        steps.push((t, BinaryConfusion::new(tp, neg - fp, fp, pos - tp)));
    }
    roc_from_confusions(&steps)
}
