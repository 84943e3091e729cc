//! Numeric scalar abstraction shared by the metric and geometry code.
//!
//! Counts are always integers; rates derived from them (precision, recall,
//! ROC coordinates, IoU) are produced through [`Scalar::from_ratio`], so the
//! same code runs on `f32`, `f64` or exact rationals.

use std::fmt::Debug;

use num_rational::Ratio;
use num_traits::Num;

/// A number type that metric computations can be carried out in.
pub trait Scalar: Num + Copy + PartialOrd + Debug + Send + Sync + 'static {
    /// `num / den`. Callers guarantee `den != 0`.
    fn from_ratio(num: u64, den: u64) -> Self;

    fn to_f64(self) -> f64;

    fn half() -> Self {
        Self::from_ratio(1, 2)
    }
}

impl Scalar for f64 {
    fn from_ratio(num: u64, den: u64) -> Self {
        num as f64 / den as f64
    }

    fn to_f64(self) -> f64 {
        self
    }
}

impl Scalar for f32 {
    fn from_ratio(num: u64, den: u64) -> Self {
        (num as f64 / den as f64) as f32
    }

    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for Ratio<i64> {
    fn from_ratio(num: u64, den: u64) -> Self {
        let num = i64::try_from(num).expect("count exceeds i64");
        let den = i64::try_from(den).expect("count exceeds i64");
        Ratio::new(num, den)
    }

    fn to_f64(self) -> f64 {
        *self.numer() as f64 / *self.denom() as f64
    }
}

impl Scalar for Ratio<i128> {
    fn from_ratio(num: u64, den: u64) -> Self {
        Ratio::new(num as i128, den as i128)
    }

    fn to_f64(self) -> f64 {
        *self.numer() as f64 / *self.denom() as f64
    }
}

/// Round half away from zero to `decimals` places.
pub fn round_half_away(value: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    (value * scale).round() / scale
}

/// Exact counterpart of [`round_half_away`].
pub fn round_half_away_exact(value: Ratio<i64>, decimals: u32) -> Ratio<i64> {
    let scale = 10i64.pow(decimals);
    let scaled = value * scale;
    let rounded = if scaled >= Ratio::from_integer(0) {
        (scaled + Ratio::new(1, 2)).floor()
    } else {
        (scaled - Ratio::new(1, 2)).ceil()
    };
    rounded / scale
}
