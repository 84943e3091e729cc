//! Box matching, image-level presence decisions, threshold sweeps and
//! confusion matrices.

mod predictions;

use std::collections::{BTreeMap, HashMap};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{AnnotatedImage, BoundingBox, ClassLabel, Corpus, Split};
use crate::infer::{sort_detections, ClassScores, Detection};
use crate::metrics::{roc_from_confusions, BinaryConfusion, MetricsError, MultiConfusion, RocCurve};
use crate::scalar::Scalar;

pub use predictions::{
    parse_predictions, read_predictions, write_class_predictions, write_detections, PredictionError, Predictions,
};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("detection references unknown image `{0}`")]
    UnknownImage(String),
    #[error("invalid detection on `{id}`: {reason}")]
    InvalidDetection { id: String, reason: String },
    #[error("missing predictions for {} image(s): {}", .0.len(), .0.join(", "))]
    MissingPredictions(Vec<String>),
    #[error("no ground-truth class for `{0}`")]
    NoTruth(String),
    #[error("no images to evaluate in scope {0}")]
    EmptyScope(String),
    #[error("invalid match settings: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    /// One decision per image.
    #[default]
    Presence,
    /// One outcome per box.
    PerBox,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    pub iou_threshold: f64,
    /// Inclusive: a detection passes when `score >= score_threshold`.
    pub score_threshold: f64,
    pub mode: MatchMode,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            iou_threshold: 0.5,
            score_threshold: 0.5,
            mode: MatchMode::Presence,
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        for (name, v) in [("iou_threshold", self.iou_threshold), ("score_threshold", self.score_threshold)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(EvalError::InvalidConfig(format!("{name} {v} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Which records an evaluation covers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalScope {
    /// The test split when the corpus has one, otherwise every record.
    #[default]
    Auto,
    All,
    #[serde(untagged)]
    Split(Split),
}

impl EvalScope {
    pub fn select<'a>(&self, corpus: &'a Corpus) -> Vec<&'a AnnotatedImage> {
        let split = match self {
            EvalScope::All => None,
            EvalScope::Split(s) => Some(*s),
            EvalScope::Auto => corpus.records().iter().any(|r| r.split == Split::Test).then_some(Split::Test),
        };
        corpus.records().iter().filter(|r| split.is_none_or(|s| r.split == s)).collect()
    }
}

impl FromStr for EvalScope {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "auto" => Ok(EvalScope::Auto),
            "all" => Ok(EvalScope::All),
            other => other.parse().map(EvalScope::Split).map_err(|_| format!("unknown scope `{other}`")),
        }
    }
}

/// Intersection over union; 0 for disjoint boxes.
pub fn iou<T: Scalar>(a: &BoundingBox, b: &BoundingBox) -> T {
    let ix = a.right().min(b.right()).saturating_sub(u64::from(a.x.max(b.x)));
    let iy = a.bottom().min(b.bottom()).saturating_sub(u64::from(a.y.max(b.y)));
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    if union == 0 {
        return T::zero();
    }
    T::from_ratio(inter, union)
}

/// Indices into the (score-filtered, sorted) detection list and the truth list.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MatchOutcome {
    /// (detection, truth) pairs.
    pub tp: Vec<(usize, usize)>,
    pub fp: Vec<usize>,
    pub fn_: Vec<usize>,
}

/// Greedy matching: detections at or above the score threshold, highest
/// score first (ties by lower x, then lower y), each claim the unmatched truth
/// box of highest IoU if that IoU reaches the threshold. Returned indices
/// refer to `kept`, the filtered and sorted detections.
pub fn match_detections(dets: &[Detection], truth: &[BoundingBox], cfg: &MatchConfig) -> (Vec<Detection>, MatchOutcome) {
    let mut kept: Vec<Detection> = dets.iter().filter(|d| d.score >= cfg.score_threshold).cloned().collect();
    sort_detections(&mut kept);
    let mut taken = vec![false; truth.len()];
    let mut out = MatchOutcome::default();
    for (di, d) in kept.iter().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        for (ti, t) in truth.iter().enumerate() {
            if taken[ti] {
                continue;
            }
            let v: f64 = iou(&d.bbox, t);
            if v >= cfg.iou_threshold && best.is_none_or(|(_, b)| v > b) {
                best = Some((ti, v));
            }
        }
        match best {
            Some((ti, _)) => {
                taken[ti] = true;
                out.tp.push((di, ti));
            }
            None => out.fp.push(di),
        }
    }
    out.fn_ = (0..truth.len()).filter(|&i| !taken[i]).collect();
    (kept, out)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct DetectionEval {
    pub confusion: BinaryConfusion,
    /// Detections passing the score threshold on positive images that
    /// overlap no truth box at the IoU threshold.
    pub localization_errors: u64,
}

fn group<'a>(
    corpus: &Corpus,
    dets: &'a [Detection],
) -> Result<HashMap<&'a str, Vec<&'a Detection>>, EvalError> {
    let mut by_image: HashMap<&str, Vec<&Detection>> = HashMap::new();
    for d in dets {
        let rec = corpus.get(&d.image_id).ok_or_else(|| EvalError::UnknownImage(d.image_id.clone()))?;
        let bad = |reason: String| EvalError::InvalidDetection {
            id: d.image_id.clone(),
            reason,
        };
        d.check().map_err(bad)?;
        if !d.fits(rec) {
            return Err(bad(format!("box outside the {}x{} image", rec.width, rec.height)));
        }
        by_image.entry(d.image_id.as_str()).or_default().push(d);
    }
    Ok(by_image)
}

fn in_scope(corpus: &Corpus, scope: EvalScope) -> Result<Vec<&AnnotatedImage>, EvalError> {
    let records = scope.select(corpus);
    if records.is_empty() {
        return Err(EvalError::EmptyScope(format!("{scope:?}")));
    }
    Ok(records)
}

fn mislocalized(dets: &[&Detection], truth: &[BoundingBox], cfg: &MatchConfig) -> u64 {
    if truth.is_empty() {
        return 0;
    }
    dets.iter()
        .filter(|d| d.score >= cfg.score_threshold)
        .filter(|d| truth.iter().all(|t| iou::<f64>(&d.bbox, t) < cfg.iou_threshold))
        .count() as u64
}

/// One decision per image: predicted positive iff some detection passes the
/// score threshold.
pub fn presence_eval(
    corpus: &Corpus,
    dets: &[Detection],
    cfg: &MatchConfig,
    scope: EvalScope,
) -> Result<DetectionEval, EvalError> {
    cfg.validate()?;
    let by_image = group(corpus, dets)?;
    let mut out = DetectionEval::default();
    for rec in in_scope(corpus, scope)? {
        let mine = by_image.get(rec.id.as_str()).map(Vec::as_slice).unwrap_or(&[]);
        let predicted = mine.iter().any(|d| d.score >= cfg.score_threshold);
        let c = &mut out.confusion;
        match (rec.is_positive(), predicted) {
            (true, true) => c.tp += 1,
            (true, false) => c.fn_ += 1,
            (false, true) => c.fp += 1,
            (false, false) => c.tn += 1,
        }
        out.localization_errors += mislocalized(mine, &rec.boxes, cfg);
    }
    Ok(out)
}

/// Box-level tallies: matched boxes are TP, unmatched detections FP,
/// unmatched truth boxes FN. TN counts negative images with no passing
/// detection.
pub fn per_box_eval(
    corpus: &Corpus,
    dets: &[Detection],
    cfg: &MatchConfig,
    scope: EvalScope,
) -> Result<DetectionEval, EvalError> {
    cfg.validate()?;
    let by_image = group(corpus, dets)?;
    let mut out = DetectionEval::default();
    for rec in in_scope(corpus, scope)? {
        let mine: Vec<Detection> = by_image
            .get(rec.id.as_str())
            .map(|v| v.iter().map(|d| (*d).clone()).collect())
            .unwrap_or_default();
        let (_, m) = match_detections(&mine, &rec.boxes, cfg);
        let c = &mut out.confusion;
        c.tp += m.tp.len() as u64;
        c.fp += m.fp.len() as u64;
        c.fn_ += m.fn_.len() as u64;
        if !rec.is_positive() && m.fp.is_empty() {
            c.tn += 1;
        }
        if rec.is_positive() {
            out.localization_errors += m.fp.len() as u64;
        }
    }
    Ok(out)
}

pub fn evaluate_detections(
    corpus: &Corpus,
    dets: &[Detection],
    cfg: &MatchConfig,
    scope: EvalScope,
) -> Result<DetectionEval, EvalError> {
    match cfg.mode {
        MatchMode::Presence => presence_eval(corpus, dets, cfg, scope),
        MatchMode::PerBox => per_box_eval(corpus, dets, cfg, scope),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sweep<T> {
    pub curve: RocCurve<T>,
    /// Presence confusion at each distinct threshold, highest first.
    pub steps: Vec<(f64, BinaryConfusion)>,
}

/// Presence-level ROC. The candidate thresholds are the distinct image
/// scores (an image's score is its best detection), which are exactly the
/// points where some presence decision flips.
pub fn sweep_thresholds<T: Scalar>(corpus: &Corpus, dets: &[Detection], scope: EvalScope) -> Result<Sweep<T>, EvalError> {
    let by_image = group(corpus, dets)?;
    let records = in_scope(corpus, scope)?;
    let mut scored: Vec<(f64, bool)> = Vec::new();
    let (mut pos, mut neg) = (0u64, 0u64);
    for rec in &records {
        if rec.is_positive() {
            pos += 1;
        } else {
            neg += 1;
        }
        if let Some(best) = by_image
            .get(rec.id.as_str())
            .and_then(|v| v.iter().map(|d| d.score).max_by(f64::total_cmp))
        {
            scored.push((best, rec.is_positive()));
        }
    }
    if pos == 0 || neg == 0 {
        return Err(MetricsError::SingleClass.into());
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut steps = Vec::new();
    let (mut tp, mut fp) = (0, 0);
    let mut i = 0;
    while i < scored.len() {
        let t = scored[i].0;
        while i < scored.len() && scored[i].0 == t {
            if scored[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        steps.push((t, BinaryConfusion::new(tp, neg - fp, fp, pos - tp)));
    }
    if steps.is_empty() {
        // No detections at all: the curve is just the two sentinels.
        steps.push((f64::INFINITY, BinaryConfusion::new(0, neg, 0, pos)));
    }
    let curve = roc_from_confusions(&steps)?;
    Ok(Sweep { curve, steps })
}

/// Rows are true classes, columns predicted, in `ClassLabel::ALL` order.
pub fn classify_eval(
    corpus: &Corpus,
    predictions: &BTreeMap<String, ClassScores>,
    scope: EvalScope,
) -> Result<MultiConfusion, EvalError> {
    let records = in_scope(corpus, scope)?;
    let missing: Vec<String> = records
        .iter()
        .filter(|r| !predictions.contains_key(&r.id))
        .map(|r| r.id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(EvalError::MissingPredictions(missing));
    }
    let labels = ClassLabel::ALL.iter().map(|c| c.as_str().to_string()).collect();
    let mut m = MultiConfusion::zeros(labels)?;
    for rec in records {
        let truth = rec.truth_class().ok_or_else(|| EvalError::NoTruth(rec.id.clone()))?;
        m.add(truth.index(), predictions[&rec.id].label().index());
    }
    Ok(m)
}

/// Tityus-vs-rest curve scored by the Tityus probability.
pub fn dangerous_roc<T: Scalar>(
    corpus: &Corpus,
    predictions: &BTreeMap<String, ClassScores>,
    scope: EvalScope,
) -> Result<RocCurve<T>, EvalError> {
    let mut samples = Vec::new();
    for rec in in_scope(corpus, scope)? {
        let truth = rec.truth_class().ok_or_else(|| EvalError::NoTruth(rec.id.clone()))?;
        let p = predictions
            .get(&rec.id)
            .ok_or_else(|| EvalError::MissingPredictions(vec![rec.id.clone()]))?;
        samples.push((p.prob(ClassLabel::Tityus), truth.is_dangerous()));
    }
    Ok(crate::metrics::roc_from_scores(&samples)?)
}
