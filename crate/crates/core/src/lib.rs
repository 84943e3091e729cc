pub mod augment;
pub mod corpus;
pub mod eval;
pub mod infer;
pub mod metrics;
pub mod report;
pub mod scalar;
pub(crate) mod seeding;
pub mod synth;

use num_rational::Ratio;

/// Exact rational scalar used for table reproduction.
pub type Exact = Ratio<i64>;
pub type MetricSetF64 = metrics::MetricSet<f64>;
pub type ExactMetricSet = metrics::MetricSet<Exact>;
pub type RocCurveF64 = metrics::RocCurve<f64>;
pub type ExactRocCurve = metrics::RocCurve<Exact>;
