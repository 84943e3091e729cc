//! Exhaustive recovery of integer confusion matrices from rounded metrics.
//!
//! Published tables give A, P, R and F to two decimals. Every metric is a
//! ratio of counts, so the candidate matrices for a total `n` can be
//! enumerated exactly: the outer loop walks `tp`, precision bounds `fp`,
//! accuracy and F-measure bound `fp + fn`, recall bounds `fn`, and each
//! surviving candidate is checked in exact integer arithmetic.

use std::ops::RangeInclusive;

use num_rational::Ratio;

use super::{BinaryConfusion, MetricSet, MetricsError, MultiConfusion};
use crate::scalar::round_half_away_exact;

type Q = Ratio<i64>;

/// Grid used when converting decimal inputs to exact rationals.
const DECIMAL_GRID: i64 = 1_000_000;

/// What a single metric must be.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Target {
    /// Within the tolerance of this value.
    Value(Q),
    /// A 0/0 case.
    Undefined,
    /// No constraint.
    Any,
}

impl Target {
    /// A decimal such as `0.93`, snapped to a 1e-6 grid so `0.93` is exactly 93/100.
    pub fn decimal(v: f64) -> Self {
        Target::Value(snap(v))
    }

    fn admits(&self, num: u64, den: u64, tol: Q) -> bool {
        match *self {
            Target::Any => true,
            Target::Undefined => den == 0,
            Target::Value(t) => den > 0 && within(num, den, t, tol),
        }
    }
}

pub(crate) fn snap(v: f64) -> Q {
    Ratio::new((v * DECIMAL_GRID as f64).round() as i64, DECIMAL_GRID)
}

/// |num/den - t| <= tol, exactly.
fn within(num: u64, den: u64, t: Q, tol: Q) -> bool {
    let (a, b) = (*t.numer() as i128, *t.denom() as i128);
    let (c, d) = (*tol.numer() as i128, *tol.denom() as i128);
    let (p, q) = (num as i128, den as i128);
    (p * b - a * q).abs() * d <= c * q * b
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MetricTargets {
    pub accuracy: Target,
    pub precision: Target,
    pub recall: Target,
    pub f_measure: Target,
}

impl MetricTargets {
    /// `[accuracy, precision, recall, f_measure]` as printed decimals.
    pub fn from_decimals(values: [f64; 4]) -> Self {
        let [a, p, r, f] = values.map(Target::decimal);
        Self {
            accuracy: a,
            precision: p,
            recall: r,
            f_measure: f,
        }
    }

    /// Rounds exact metrics the way a results table would print them.
    pub fn from_exact(m: &MetricSet<Q>, decimals: u32) -> Self {
        let t = |v: Option<Q>| match v {
            Some(v) => Target::Value(round_half_away_exact(v, decimals)),
            None => Target::Undefined,
        };
        Self {
            accuracy: t(m.accuracy),
            precision: t(m.precision),
            recall: t(m.recall),
            f_measure: t(m.f_measure),
        }
    }

    pub fn matches(&self, m: &BinaryConfusion, tol: Q) -> bool {
        let pr_defined = m.tp + m.fp > 0 && m.tp + m.fn_ > 0;
        let f_den = if pr_defined { 2 * m.tp + m.fp + m.fn_ } else { 0 };
        self.accuracy.admits(m.tp + m.tn, m.n(), tol)
            && self.precision.admits(m.tp, m.tp + m.fp, tol)
            && self.recall.admits(m.tp, m.tp + m.fn_, tol)
            && self.f_measure.admits(2 * m.tp, f_den, tol)
    }
}

/// Inclusive integer range, possibly empty.
#[derive(Clone, Copy, Debug)]
struct Span {
    lo: u64,
    hi: u64,
}

impl Span {
    fn new(lo: u64, hi: u64) -> Self {
        Self { lo, hi }
    }

    fn empty() -> Self {
        Self { lo: 1, hi: 0 }
    }

    fn intersect(self, other: Span) -> Span {
        Span::new(self.lo.max(other.lo), self.hi.min(other.hi))
    }

    fn iter(self) -> RangeInclusive<u64> {
        self.lo..=self.hi
    }
}

fn q_to_f64(q: Q) -> f64 {
    *q.numer() as f64 / *q.denom() as f64
}

/// Denominators `den` in `[1, max]` for which `num/den` can be within `tol`
/// of `t`. A superset: the exact check happens later.
fn denominator_span(num: u64, t: Q, tol: Q, max: u64) -> Span {
    let (t, e) = (q_to_f64(t), q_to_f64(tol));
    if num == 0 {
        return if t - e <= 1e-12 { Span::new(1, max) } else { Span::empty() };
    }
    let lo = ((num as f64 / (t + e)).floor() as i64 - 1).max(1) as u64;
    let hi = if t - e > 1e-12 {
        ((num as f64 / (t - e)).ceil() as u64).saturating_add(1).min(max)
    } else {
        max
    };
    Span::new(lo, hi)
}

/// All `(tp, tn, fp, fn)` with total `n` whose metrics match `targets`
/// within `tol`, ordered by `(tp, fp, fn)`. An empty result means the
/// targets are infeasible at this `n`.
pub fn reconstruct_confusion(targets: &MetricTargets, n: u64, tol: Q) -> Vec<BinaryConfusion> {
    let mut out = Vec::new();
    if n == 0 {
        return out;
    }

    // fp + fn from accuracy
    let err_from_acc = match targets.accuracy {
        Target::Value(a) => {
            let (a, e) = (q_to_f64(a), q_to_f64(tol));
            let lo = (n as f64 * (1.0 - a - e)).floor() - 1.0;
            let hi = (n as f64 * (1.0 - a + e)).ceil() + 1.0;
            if hi < 0.0 {
                return out;
            }
            Span::new(lo.max(0.0) as u64, (hi as u64).min(n))
        }
        Target::Undefined => return out,
        Target::Any => Span::new(0, n),
    };

    // F = 2tp / (2tp + err) with err = fp + fn bounded by accuracy, so F
    // brackets tp. Floats only widen the range; exact checks follow.
    let mut tp_span = Span::new(0, n);
    if let Target::Value(f) = targets.f_measure {
        let (f, e) = (q_to_f64(f), q_to_f64(tol));
        let (f_lo, f_hi) = (f - e, f + e);
        if f_lo > 1e-12 {
            let lo = (f_lo * err_from_acc.lo as f64 / (2.0 * (1.0 - f_lo))).floor() - 1.0;
            tp_span.lo = lo.max(1.0) as u64;
        }
        if f_hi < 1.0 - 1e-12 {
            let hi = (f_hi * err_from_acc.hi as f64 / (2.0 * (1.0 - f_hi))).ceil() + 1.0;
            tp_span.hi = tp_span.hi.min(hi as u64);
        }
    }

    for tp in tp_span.iter() {
        let rest = n - tp;
        let mut err = err_from_acc.intersect(Span::new(0, rest));
        if let (Target::Value(f), true) = (targets.f_measure, tp > 0) {
            let den = denominator_span(2 * tp, f, tol, 2 * tp + rest);
            err = err.intersect(Span::new(den.lo.saturating_sub(2 * tp), den.hi.saturating_sub(2 * tp)));
            if den.hi < 2 * tp {
                continue;
            }
        }
        if err.lo > err.hi {
            continue;
        }

        let fp_span = match targets.precision {
            Target::Any => Span::new(0, rest),
            Target::Undefined if tp == 0 => Span::new(0, 0),
            Target::Undefined => Span::empty(),
            Target::Value(p) => {
                let s = denominator_span(tp, p, tol, n);
                if s.hi < tp {
                    Span::empty()
                } else {
                    Span::new(s.lo.saturating_sub(tp), s.hi - tp)
                }
            }
        }
        .intersect(Span::new(0, err.hi));

        for fp in fp_span.iter() {
            let fn_span = match targets.recall {
                Target::Any => Span::new(0, rest - fp),
                Target::Undefined if tp == 0 => Span::new(0, 0),
                Target::Undefined => Span::empty(),
                Target::Value(r) => {
                    let s = denominator_span(tp, r, tol, n);
                    if s.hi < tp {
                        Span::empty()
                    } else {
                        Span::new(s.lo.saturating_sub(tp), s.hi - tp)
                    }
                }
            }
            .intersect(Span::new(err.lo.saturating_sub(fp), err.hi.saturating_sub(fp)))
            .intersect(Span::new(0, rest - fp));
            if err.hi < fp {
                break;
            }

            for fn_ in fn_span.iter() {
                let m = BinaryConfusion::new(tp, rest - fp - fn_, fp, fn_);
                if targets.matches(&m, tol) {
                    out.push(m);
                }
            }
        }
    }
    out
}

/// Per-class targets for the multi-class search.
#[derive(Clone, Debug)]
pub struct ClassTargets {
    pub label: String,
    pub targets: MetricTargets,
    /// Optional bound on the number of images whose true class is this one.
    pub row_hint: Option<RangeInclusive<u64>>,
}

#[derive(Clone, Copy, Debug)]
pub struct SearchBudget {
    /// Search nodes (partial assignments) visited before giving up.
    pub max_nodes: u64,
    pub max_solutions: usize,
}

impl Default for SearchBudget {
    fn default() -> Self {
        Self {
            max_nodes: 50_000_000,
            max_solutions: 10_000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SearchStatus {
    Feasible,
    Infeasible,
    /// The budget ran out before the space was exhausted; `solutions` holds
    /// what was found so far.
    BudgetExceeded,
}

#[derive(Clone, Debug)]
pub struct MultiSearch {
    pub status: SearchStatus,
    pub solutions: Vec<MultiConfusion>,
    /// Per-class (diagonal, row sum, column sum) candidates that match that
    /// class's targets in isolation.
    pub class_candidates: Vec<usize>,
    pub nodes: u64,
}

/// One class's one-vs-rest metrics depend only on its diagonal cell `d`, row
/// sum `r` and column sum `k`, so candidates are found per class with the
/// binary search, combined so that rows and columns each sum to `n`, and the
/// off-diagonal cells are then filled in every way the margins allow.
pub fn reconstruct_multiclass(
    classes: &[ClassTargets],
    n: u64,
    tol: Q,
    budget: SearchBudget,
) -> Result<MultiSearch, MetricsError> {
    let k = classes.len();
    if k < 2 {
        return Err(MetricsError::BadShape);
    }
    let candidates: Vec<Vec<Margin>> = classes
        .iter()
        .map(|c| {
            reconstruct_confusion(&c.targets, n, tol)
                .into_iter()
                .map(|m| Margin {
                    diag: m.tp,
                    row: m.tp + m.fn_,
                    col: m.tp + m.fp,
                })
                .filter(|m| c.row_hint.as_ref().is_none_or(|h| h.contains(&m.row)))
                .collect()
        })
        .collect();

    let mut search = Search {
        n,
        budget,
        nodes: 0,
        exhausted: false,
        labels: classes.iter().map(|c| c.label.clone()).collect(),
        chosen: Vec::with_capacity(k),
        solutions: Vec::new(),
    };
    search.choose(&candidates, 0, 0);

    let status = if search.exhausted {
        SearchStatus::BudgetExceeded
    } else if search.solutions.is_empty() {
        SearchStatus::Infeasible
    } else {
        SearchStatus::Feasible
    };
    Ok(MultiSearch {
        status,
        solutions: search.solutions,
        class_candidates: candidates.iter().map(Vec::len).collect(),
        nodes: search.nodes,
    })
}

#[derive(Clone, Copy, Debug)]
struct Margin {
    diag: u64,
    row: u64,
    col: u64,
}

struct Search {
    n: u64,
    budget: SearchBudget,
    nodes: u64,
    exhausted: bool,
    labels: Vec<String>,
    chosen: Vec<Margin>,
    solutions: Vec<MultiConfusion>,
}

impl Search {
    fn tick(&mut self) -> bool {
        self.nodes += 1;
        if self.nodes > self.budget.max_nodes || self.solutions.len() >= self.budget.max_solutions {
            self.exhausted = true;
        }
        !self.exhausted
    }

    fn choose(&mut self, candidates: &[Vec<Margin>], row_sum: u64, col_sum: u64) {
        let depth = self.chosen.len();
        if depth == candidates.len() {
            if row_sum == self.n && col_sum == self.n {
                self.fill();
            }
            return;
        }
        for &m in &candidates[depth] {
            if !self.tick() {
                return;
            }
            if row_sum + m.row > self.n || col_sum + m.col > self.n {
                continue;
            }
            self.chosen.push(m);
            self.choose(candidates, row_sum + m.row, col_sum + m.col);
            self.chosen.pop();
        }
    }

    fn fill(&mut self) {
        let k = self.chosen.len();
        let mut counts = vec![vec![0u64; k]; k];
        for (i, m) in self.chosen.iter().enumerate() {
            counts[i][i] = m.diag;
        }
        let mut row_rem: Vec<u64> = self.chosen.iter().map(|m| m.row - m.diag).collect();
        let mut col_rem: Vec<u64> = self.chosen.iter().map(|m| m.col - m.diag).collect();
        let cells: Vec<(usize, usize)> = (0..k)
            .flat_map(|i| (0..k).filter(move |&j| j != i).map(move |j| (i, j)))
            .collect();
        self.fill_cell(&cells, 0, &mut counts, &mut row_rem, &mut col_rem);
    }

    fn fill_cell(
        &mut self,
        cells: &[(usize, usize)],
        idx: usize,
        counts: &mut Vec<Vec<u64>>,
        row_rem: &mut [u64],
        col_rem: &mut [u64],
    ) {
        if !self.tick() {
            return;
        }
        if idx == cells.len() {
            if col_rem.iter().all(|&c| c == 0) && row_rem.iter().all(|&r| r == 0) {
                let m = MultiConfusion::new(self.labels.clone(), counts.clone()).expect("square by construction");
                self.solutions.push(m);
            }
            return;
        }
        let (i, j) = cells[idx];
        let last_in_row = cells.get(idx + 1).is_none_or(|&(ni, _)| ni != i);
        let hi = row_rem[i].min(col_rem[j]);
        let lo = if last_in_row { row_rem[i] } else { 0 };
        if lo > hi {
            return;
        }
        for v in lo..=hi {
            counts[i][j] = v;
            row_rem[i] -= v;
            col_rem[j] -= v;
            self.fill_cell(cells, idx + 1, counts, row_rem, col_rem);
            row_rem[i] += v;
            col_rem[j] += v;
            if self.exhausted {
                break;
            }
        }
        counts[i][j] = 0;
    }
}
